use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::classify::ClassifiedMap;
use crate::error::{Error, Result};
use crate::prediction::cell_id;
use crate::survey_data::{GridCell, Level, PopulationGrid};

pub type Rgb = [u8; 3];

/// Neutral grey for cells outside every mapped unit.
pub const NODATA_RGB: Rgb = [160, 160, 160];

/// Interval colours, index 0 for the lowest interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<Rgb>,
}

const RAMP: [Rgb; 3] = [[215, 48, 39], [254, 224, 139], [26, 152, 80]];

/// Red to yellow to green ramp with `k` colours (low coverage red).
pub fn default_palette(k: usize) -> Palette {
    let colors = (0..k)
        .map(|i| {
            let t = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
            let (a, b, f) = if t <= 0.5 {
                (RAMP[0], RAMP[1], t * 2.0)
            } else {
                (RAMP[1], RAMP[2], (t - 0.5) * 2.0)
            };
            let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
            [mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])]
        })
        .collect();
    Palette { colors }
}

/// Reads `interval_index,r,g,b` with 1-based contiguous indices.
pub fn read_palette(path: impl AsRef<Path>) -> Result<Palette> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    for col in ["interval_index", "r", "g", "b"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                column: col.into(),
            });
        }
    }
    let pos = |c: &str| headers.iter().position(|h| h == c).unwrap();
    let (pi, pr, pg, pb) = (pos("interval_index"), pos("r"), pos("g"), pos("b"));
    let mut entries = BTreeMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| Error::Row { row: row + 1, message: m };
        let idx: usize = rec[pi]
            .parse()
            .map_err(|_| bad(format!("bad interval_index `{}`", &rec[pi])))?;
        let ch = |i: usize| -> Result<u8> { rec[i].parse().map_err(|_| bad(format!("bad colour value `{}`", &rec[i]))) };
        if entries.insert(idx, [ch(pr)?, ch(pg)?, ch(pb)?]).is_some() {
            return Err(bad(format!("duplicate interval_index {idx}")));
        }
    }
    let colors: Vec<Rgb> = entries.values().copied().collect();
    if entries.keys().copied().ne(1..=colors.len()) {
        return Err(Error::Validation("palette indices must run 1..K without gaps".into()));
    }
    Ok(Palette { colors })
}

pub fn write_palette(path: impl AsRef<Path>, palette: &Palette) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["interval_index", "r", "g", "b"])?;
    for (i, c) in palette.colors.iter().enumerate() {
        w.write_record([(i + 1).to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderOutputs {
    pub image: PathBuf,
    pub legend_csv: PathBuf,
    pub legend_svg: PathBuf,
}

fn unit_of(grid: &PopulationGrid, cell: &GridCell, level: Level) -> Option<String> {
    match level {
        Level::Cell => Some(cell_id(cell.row, cell.col)),
        Level::Lga => grid.lga_of(cell).map(str::to_string),
        Level::State => grid.state_of(cell).map(str::to_string),
        Level::National => cell.area.map(|_| "national".to_string()),
    }
}

/// Writes `<stem>.ppm` (binary P6, one pixel per raster cell),
/// `<stem>_legend.csv` (one row per interval, then one per unit with its
/// TCP) and `<stem>_legend.svg` into `dir`.
pub fn render(
    map: &ClassifiedMap,
    grid: &PopulationGrid,
    palette: &Palette,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<RenderOutputs> {
    let k = map.partition.k();
    if palette.colors.len() < k {
        return Err(Error::Validation(format!(
            "palette has {} colours for {k} intervals",
            palette.colors.len()
        )));
    }
    let class_of: BTreeMap<&str, usize> = map
        .unit_ids
        .iter()
        .map(String::as_str)
        .zip(map.assigned.iter().copied())
        .collect();
    let g = grid.geometry;
    let mut pixels = vec![NODATA_RGB; g.len()];
    let mut seen = BTreeSet::new();
    for cell in &grid.cells {
        if let Some(unit) = unit_of(grid, cell, map.level) {
            if let Some((id, &c)) = class_of.get_key_value(unit.as_str()) {
                pixels[cell.row * g.ncols + cell.col] = palette.colors[c];
                seen.insert(*id);
            }
        }
    }
    if let Some(missing) = map.unit_ids.iter().find(|u| !seen.contains(u.as_str())) {
        return Err(Error::CoverageGap(format!(
            "unit `{missing}` does not appear in the membership raster"
        )));
    }

    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let image = dir.join(format!("{stem}.ppm"));
    let mut bytes = format!("P6\n{} {}\n255\n", g.ncols, g.nrows).into_bytes();
    for p in &pixels {
        bytes.extend_from_slice(p);
    }
    fs::write(&image, bytes).map_err(|e| Error::io(&image, e))?;

    let legend_csv = dir.join(format!("{stem}_legend.csv"));
    let mut w = csv::Writer::from_path(&legend_csv)?;
    w.write_record(["record", "interval_index", "lower", "upper", "r", "g", "b", "unit_id", "tcp"])?;
    let interval_fields = |j: usize| -> Vec<String> {
        let (lo, hi) = map.partition.bounds(j);
        let c = palette.colors[j];
        vec![
            (j + 1).to_string(),
            lo.to_string(),
            hi.to_string(),
            c[0].to_string(),
            c[1].to_string(),
            c[2].to_string(),
        ]
    };
    for j in 0..k {
        let mut rec = vec!["interval".to_string()];
        rec.extend(interval_fields(j));
        rec.extend([String::new(), String::new()]);
        w.write_record(&rec)?;
    }
    for (i, id) in map.unit_ids.iter().enumerate() {
        let mut rec = vec!["unit".to_string()];
        rec.extend(interval_fields(map.assigned[i]));
        rec.extend([id.clone(), map.tcp[i].to_string()]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&legend_csv, e))?;

    let legend_svg = dir.join(format!("{stem}_legend.svg"));
    fs::write(&legend_svg, legend_svg_text(map, palette)).map_err(|e| Error::io(&legend_svg, e))?;
    Ok(RenderOutputs {
        image,
        legend_csv,
        legend_svg,
    })
}

fn legend_svg_text(map: &ClassifiedMap, palette: &Palette) -> String {
    let k = map.partition.k();
    let (sw, sh) = (90, 24);
    let width = sw * k + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="80" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"  <text x="10" y="14">ATCP {:.3}</text>"#, map.atcp);
    for j in 0..k {
        let c = palette.colors[j];
        let (lo, hi) = map.partition.bounds(j);
        let x = 10 + j * sw;
        let close = if j + 1 == k { ']' } else { ')' };
        let _ = writeln!(
            s,
            r#"  <rect x="{x}" y="24" width="{sw}" height="{sh}" fill="rgb({},{},{})" stroke="black" stroke-width="0.5"/>"#,
            c[0], c[1], c[2]
        );
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="64">[{:.0}%, {:.0}%{close}</text>"#,
            x + 4,
            lo * 100.0,
            hi * 100.0
        );
    }
    s.push_str("</svg>\n");
    s
}
