//! Text file formats: landmark CSV, ground-truth CSV, match and chain TSV, cell map CSV.
//!
//! All outputs are UTF-8 with LF line endings and `.` decimal separators.
//! Floats are written in shortest round-trip form.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::model::{
    validate_landmarks, CellMap, ChainRow, Direction, GroundTruthMatches, Landmark, MatchChain, MatchPair, MatchSet,
};
use crate::synthetic::SyntheticStack;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Splits leading `#key=value` lines off a text body.
///
/// Returns the key/value pairs and the number of lines consumed.
fn split_preamble(text: &str) -> (Vec<(String, String)>, usize) {
    let mut kv = Vec::new();
    let mut consumed = 0;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { break };
        consumed += 1;
        for item in rest.split_whitespace() {
            if let Some((k, v)) = item.split_once('=') {
                kv.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    (kv, consumed)
}

fn body_after(text: &str, lines: usize) -> &str {
    let mut offset = 0;
    for _ in 0..lines {
        match text[offset..].find('\n') {
            Some(i) => offset += i + 1,
            None => return "",
        }
    }
    &text[offset..]
}

fn csv_reader(body: &str, delimiter: u8) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes())
}

fn record_line(rec: &csv::StringRecord, preamble: usize) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0) + preamble as u64
}

fn parse_f64(s: &str, path: &Path, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::parse(path, line, format!("invalid {what} `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite {what} `{s}`")));
    }
    Ok(v)
}

fn parse_boundary(s: &str, scale: f64, path: &Path, line: u64) -> Result<Option<Polygon>> {
    if s.is_empty() {
        return Ok(None);
    }
    let mut vertices = Vec::new();
    for pair in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let mut it = pair.split_whitespace();
        let (Some(x), Some(y), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(path, line, format!("invalid boundary vertex `{pair}`")));
        };
        vertices.push(Point::new(
            parse_f64(x, path, line, "boundary x")? * scale,
            parse_f64(y, path, line, "boundary y")? * scale,
        ));
    }
    Ok(Some(Polygon::new(vertices)))
}

/// Parses landmark CSV text. `path` is only used in diagnostics.
pub fn parse_landmarks(text: &str, path: &Path, slide_id: &str) -> Result<Vec<Landmark>> {
    let (preamble, skipped) = split_preamble(text);
    let mut units = "um".to_string();
    let mut resolution = None;
    for (k, v) in &preamble {
        match k.as_str() {
            "units" => units = v.clone(),
            "resolution_um_per_px" => resolution = Some(parse_f64(v, path, 1, "resolution")?),
            _ => {}
        }
    }
    let scale = match units.as_str() {
        "um" => 1.0,
        "px" => match resolution {
            Some(r) if r > 0.0 => r,
            Some(r) => return Err(Error::parse(path, 1, format!("resolution must be positive, got {r}"))),
            None => return Err(Error::parse(path, 1, "units=px requires resolution_um_per_px")),
        },
        other => return Err(Error::parse(path, 1, format!("unknown units `{other}`"))),
    };

    let body = body_after(text, skipped);
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv_reader(body, b',');
    let headers = rdr.headers().map_err(|e| Error::parse(path, skipped as u64 + 1, e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3
        || cols[0] != "id"
        || cols[1] != "x"
        || cols[2] != "y"
        || (cols.len() > 3 && cols[3] != "boundary")
        || cols.len() > 4
    {
        return Err(Error::parse(
            path,
            skipped as u64 + 1,
            format!("expected header `id,x,y[,boundary]`, got `{}`", cols.join(",")),
        ));
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0) + skipped as u64;
            Error::parse(path, line, e.to_string())
        })?;
        let line = record_line(&rec, skipped);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if rec.len() < 3 || rec.len() > cols.len() {
            return Err(Error::parse(path, line, format!("expected {} fields, got {}", cols.len(), rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty id"));
        }
        let x = parse_f64(&rec[1], path, line, "x")? * scale;
        let y = parse_f64(&rec[2], path, line, "y")? * scale;
        let boundary = match rec.get(3) {
            Some(b) => parse_boundary(b, scale, path, line)?,
            None => None,
        };
        out.push(Landmark { id, slide_id: slide_id.to_string(), position: Point::new(x, y), boundary });
    }
    validate_landmarks(&out)?;
    Ok(out)
}

pub fn load_landmarks(path: impl AsRef<Path>, slide_id: &str) -> Result<Vec<Landmark>> {
    let path = path.as_ref();
    parse_landmarks(&read_text(path)?, path, slide_id)
}

pub fn format_landmarks(landmarks: &[Landmark]) -> String {
    let with_boundary = landmarks.iter().any(|l| l.boundary.is_some());
    let mut s = String::from("# units=um\n");
    s.push_str(if with_boundary { "id,x,y,boundary\n" } else { "id,x,y\n" });
    for l in landmarks {
        s.push_str(&format!("{},{},{}", l.id, l.position.x, l.position.y));
        if with_boundary {
            s.push(',');
            if let Some(b) = &l.boundary {
                let verts: Vec<String> = b.vertices.iter().map(|p| format!("{} {}", p.x, p.y)).collect();
                s.push_str(&verts.join(";"));
            }
        }
        s.push('\n');
    }
    s
}

pub fn save_landmarks(path: impl AsRef<Path>, landmarks: &[Landmark]) -> Result<()> {
    write_text(path.as_ref(), &format_landmarks(landmarks))
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<GroundTruthMatches> {
    let mut rdr = csv_reader(text, b',');
    let slides: Vec<String> =
        rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.iter().map(str::to_string).collect();
    if slides.len() < 2 {
        return Err(Error::parse(path, 1, "ground truth needs at least two slide columns"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec, 0);
        if rec.len() != slides.len() {
            return Err(Error::parse(path, line, format!("expected {} cells, got {}", slides.len(), rec.len())));
        }
        let row: Vec<Option<String>> = rec.iter().map(|c| (!c.is_empty()).then(|| c.to_string())).collect();
        if row.iter().all(Option::is_none) {
            continue;
        }
        rows.push(row);
    }
    GroundTruthMatches::new(slides, rows)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthMatches> {
    let path = path.as_ref();
    parse_ground_truth(&read_text(path)?, path)
}

fn format_id_table(header: &[String], rows: &[Vec<Option<String>>], sep: char) -> String {
    let sep_s = sep.to_string();
    let mut s = header.join(&sep_s);
    s.push('\n');
    for r in rows {
        let cells: Vec<&str> = r.iter().map(|c| c.as_deref().unwrap_or("")).collect();
        s.push_str(&cells.join(&sep_s));
        s.push('\n');
    }
    s
}

pub fn format_ground_truth(gt: &GroundTruthMatches) -> String {
    format_id_table(&gt.slides, &gt.rows, ',')
}

pub fn save_ground_truth(path: impl AsRef<Path>, gt: &GroundTruthMatches) -> Result<()> {
    write_text(path.as_ref(), &format_ground_truth(gt))
}

pub fn format_match_set(m: &MatchSet) -> String {
    let mut s =
        format!("# source_slide={} target_slide={}\ng_id\th_id\tenergy\tdirection\n", m.source_slide, m.target_slide);
    for p in &m.pairs {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", p.g_id, p.h_id, p.energy, m.direction));
    }
    s
}

pub fn save_match_set(path: impl AsRef<Path>, m: &MatchSet) -> Result<()> {
    write_text(path.as_ref(), &format_match_set(m))
}

pub fn parse_match_set(text: &str, path: &Path) -> Result<MatchSet> {
    let (preamble, skipped) = split_preamble(text);
    let get = |k: &str| preamble.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
    let source_slide = get("source_slide").unwrap_or_else(|| "G".into());
    let target_slide = get("target_slide").unwrap_or_else(|| "H".into());
    let mut rdr = csv_reader(body_after(text, skipped), b'\t');
    let headers = rdr.headers().map_err(|e| Error::parse(path, skipped as u64 + 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["g_id", "h_id", "energy", "direction"] {
        return Err(Error::parse(path, skipped as u64 + 1, "expected header `g_id\\th_id\\tenergy\\tdirection`"));
    }
    let mut direction = None;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec, skipped);
        if rec.len() != 4 {
            return Err(Error::parse(path, line, format!("expected 4 fields, got {}", rec.len())));
        }
        let dir = Direction::parse(&rec[3])
            .ok_or_else(|| Error::parse(path, line, format!("unknown direction `{}`", &rec[3])))?;
        if direction.is_some_and(|d| d != dir) {
            return Err(Error::parse(path, line, "mixed directions in one match file"));
        }
        direction = Some(dir);
        let energy =
            rec[2].parse::<f64>().map_err(|_| Error::parse(path, line, format!("invalid energy `{}`", &rec[2])))?;
        pairs.push(MatchPair { g_id: rec[0].to_string(), h_id: rec[1].to_string(), energy });
    }
    Ok(MatchSet { source_slide, target_slide, direction: direction.unwrap_or(Direction::Bidirectional), pairs })
}

pub fn load_match_set(path: impl AsRef<Path>) -> Result<MatchSet> {
    let path = path.as_ref();
    parse_match_set(&read_text(path)?, path)
}

pub fn format_chain(chain: &MatchChain) -> String {
    let rows: Vec<Vec<Option<String>>> = chain.rows.iter().map(|r| r.ids.clone()).collect();
    format_id_table(&chain.slides, &rows, '\t')
}

pub fn save_chain(path: impl AsRef<Path>, chain: &MatchChain) -> Result<()> {
    write_text(path.as_ref(), &format_chain(chain))
}

pub fn parse_chain(text: &str, path: &Path) -> Result<MatchChain> {
    let mut rdr = csv_reader(text, b'\t');
    let slides: Vec<String> =
        rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec, 0);
        if rec.len() != slides.len() {
            return Err(Error::parse(path, line, format!("expected {} cells, got {}", slides.len(), rec.len())));
        }
        rows.push(ChainRow { ids: rec.iter().map(|c| (!c.is_empty()).then(|| c.to_string())).collect() });
    }
    Ok(MatchChain { slides, rows })
}

pub fn load_chain(path: impl AsRef<Path>) -> Result<MatchChain> {
    let path = path.as_ref();
    parse_chain(&read_text(path)?, path)
}

/// Writes cell maps as `cell_type,x,y` rows.
pub fn format_cellmaps(maps: &[CellMap]) -> String {
    let mut s = String::from("cell_type,x,y\n");
    for m in maps {
        for p in &m.points {
            s.push_str(&format!("{},{},{}\n", m.cell_type, p.x, p.y));
        }
    }
    s
}

pub fn save_cellmaps(path: impl AsRef<Path>, maps: &[CellMap]) -> Result<()> {
    write_text(path.as_ref(), &format_cellmaps(maps))
}

/// Reads a `cell_type,x,y` CSV into one map per cell type, in first-seen order.
pub fn parse_cellmaps(text: &str, path: &Path, slide_id: &str) -> Result<Vec<CellMap>> {
    let mut rdr = csv_reader(text, b',');
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["cell_type", "x", "y"] {
        return Err(Error::parse(path, 1, "expected header `cell_type,x,y`"));
    }
    let mut maps: Vec<CellMap> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec, 0);
        if rec.len() != 3 {
            return Err(Error::parse(path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        if rec[0].is_empty() {
            return Err(Error::parse(path, line, "empty cell type"));
        }
        let p = Point::new(parse_f64(&rec[1], path, line, "x")?, parse_f64(&rec[2], path, line, "y")?);
        match maps.iter_mut().find(|m| m.cell_type == rec[0]) {
            Some(m) => m.points.push(p),
            None => maps.push(CellMap::new(slide_id, &rec[0], vec![p])),
        }
    }
    Ok(maps)
}

pub fn load_cellmaps(path: impl AsRef<Path>, slide_id: &str) -> Result<Vec<CellMap>> {
    let path = path.as_ref();
    parse_cellmaps(&read_text(path)?, path, slide_id)
}

/// Writes `text` to `path`, creating parent directories.
pub fn save_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_text(path.as_ref(), text)
}

/// Writes `<slide>_landmarks.csv` and `<slide>_cells.csv` per slide, plus `truth.csv`.
pub fn save_stack(dir: impl AsRef<Path>, stack: &SyntheticStack) -> Result<()> {
    let dir = dir.as_ref();
    for s in &stack.slides {
        save_landmarks(dir.join(format!("{}_landmarks.csv", s.slide_id)), &s.landmarks)?;
        save_cellmaps(dir.join(format!("{}_cells.csv", s.slide_id)), &s.cellmaps)?;
    }
    save_ground_truth(dir.join("truth.csv"), &stack.truth)
}
