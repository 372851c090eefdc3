//! CSV loaders and writers for players, stints, box scores and lines.
//!
//! All files are UTF-8 with a mandatory header row and `.` as the decimal
//! separator. Writers emit `\n` line endings and the shortest decimal text
//! that round-trips each float, so `write(load(x)) == x` for files produced
//! by the writers.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use log::warn;

use crate::data::{BoxScoreTable, PlayerTable, Stint, StintSet, LINEUP_SIZE};
use crate::error::{Error, Result};

pub const PLAYERS_HEADER: &[&str] = &["player_id", "name"];
pub const STINTS_HEADER: &[&str] = &[
    "game_id", "weight", "margin", "h1", "h2", "h3", "h4", "h5", "a1", "a2", "a3", "a4", "a5",
];
pub const LINES_HEADER: &[&str] = &["game_id", "home_line"];

/// Published point spreads keyed by game. A positive line means the home
/// team is favored by that many points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VegasLines(BTreeMap<u64, f64>);

impl VegasLines {
    pub fn new(lines: BTreeMap<u64, f64>) -> Result<Self> {
        if let Some((g, v)) = lines.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("line for game {g} is not finite: {v}")));
        }
        Ok(VegasLines(lines))
    }

    pub fn get(&self, game_id: u64) -> Option<f64> {
        self.0.get(&game_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.0.iter().map(|(&g, &v)| (g, v))
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(file))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::parse(path, line, e.to_string())
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn headers(rdr: &mut csv::Reader<File>, path: &Path) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| csv_err(path, e))?;
    Ok(h.iter().map(str::to_string).collect())
}

fn expect_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let got = headers(rdr, path)?;
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// Iterates over data records, yielding `(line, record)`.
fn records<'a>(
    rdr: &'a mut csv::Reader<File>,
    path: &Path,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    let path = path.to_path_buf();
    rdr.records().map(move |r| {
        let rec = r.map_err(|e| csv_err(&path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        Ok((line, rec))
    })
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::parse(path, line, format!("missing column `{name}`")))?;
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse `{raw}` in column `{name}`")))
}

fn float_field(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<f64> {
    let v: f64 = field(rec, idx, name, path, line)?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value in column `{name}`")));
    }
    Ok(v)
}

pub fn load_players(path: &Path) -> Result<PlayerTable> {
    let mut rdr = reader(path)?;
    expect_header(&mut rdr, path, PLAYERS_HEADER)?;
    let mut rows: Vec<(usize, String, u64)> = Vec::new();
    let mut seen: HashMap<usize, u64> = HashMap::new();
    for r in records(&mut rdr, path) {
        let (line, rec) = r?;
        let id: usize = field(&rec, 0, "player_id", path, line)?;
        let name: String = field(&rec, 1, "name", path, line)?;
        if let Some(first) = seen.insert(id, line) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate player id {id} (first seen on line {first})"),
            ));
        }
        rows.push((id, name, line));
    }
    let p = rows.len();
    if let Some((id, _, line)) = rows.iter().find(|(id, _, _)| *id >= p) {
        return Err(Error::parse(
            path,
            *line,
            format!("non-dense ids: player id {id} but only {p} players listed"),
        ));
    }
    let mut names = vec![String::new(); p];
    for (id, name, _) in rows {
        names[id] = name;
    }
    PlayerTable::new(names).map_err(|e| Error::parse(path, 1, e.to_string()))
}

pub fn write_players(path: &Path, players: &PlayerTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    w.write_record(PLAYERS_HEADER).map_err(&err)?;
    for (i, name) in players.names().iter().enumerate() {
        w.write_record([i.to_string().as_str(), name]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads stints, regrouping them stably so each game's stints are adjacent.
pub fn load_stints(path: &Path, players: &PlayerTable) -> Result<StintSet> {
    let mut rdr = reader(path)?;
    expect_header(&mut rdr, path, STINTS_HEADER)?;
    let p = players.len();
    let mut stints = Vec::new();
    for r in records(&mut rdr, path) {
        let (line, rec) = r?;
        if rec.len() != STINTS_HEADER.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", STINTS_HEADER.len(), rec.len()),
            ));
        }
        let game_id: u64 = field(&rec, 0, "game_id", path, line)?;
        let weight = float_field(&rec, 1, "weight", path, line)?;
        let margin = float_field(&rec, 2, "margin", path, line)?;
        let mut slots = [0usize; 2 * LINEUP_SIZE];
        for (k, slot) in slots.iter_mut().enumerate() {
            *slot = field(&rec, 3 + k, STINTS_HEADER[3 + k], path, line)?;
        }
        let stint = Stint {
            game_id,
            home: slots[..LINEUP_SIZE].try_into().expect("five home slots"),
            away: slots[LINEUP_SIZE..].try_into().expect("five away slots"),
            weight,
            margin,
        };
        stint
            .validate(p)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        stints.push(stint);
    }
    StintSet::new_regrouped(stints, players.clone()).map_err(|e| Error::parse(path, 1, e.to_string()))
}

pub fn write_stints(path: &Path, set: &StintSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    w.write_record(STINTS_HEADER).map_err(&err)?;
    for s in set.stints() {
        let mut row = vec![s.game_id.to_string(), s.weight.to_string(), s.margin.to_string()];
        row.extend(s.home.iter().chain(s.away.iter()).map(|j| j.to_string()));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a `player_id,<stat_1>,...,<stat_d>` table. Players without a row
/// get all-zero statistics and a warning.
pub fn load_box_scores(path: &Path, players: &PlayerTable) -> Result<BoxScoreTable> {
    let mut rdr = reader(path)?;
    let header = headers(&mut rdr, path)?;
    if header.first().map(String::as_str) != Some("player_id") || header.len() < 2 {
        return Err(Error::parse(
            path,
            1,
            "expected header `player_id,<stat_1>,...,<stat_d>`",
        ));
    }
    let stat_names: Vec<String> = header[1..].to_vec();
    let d = stat_names.len();
    let p = players.len();
    let mut data = vec![0.0; p * d];
    let mut seen: HashMap<usize, u64> = HashMap::new();
    for r in records(&mut rdr, path) {
        let (line, rec) = r?;
        if rec.len() != d + 1 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", d + 1, rec.len()),
            ));
        }
        let id: usize = field(&rec, 0, "player_id", path, line)?;
        if id >= p {
            return Err(Error::parse(path, line, format!("unknown player id {id}")));
        }
        if let Some(first) = seen.insert(id, line) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate player id {id} (first seen on line {first})"),
            ));
        }
        for j in 0..d {
            data[id * d + j] = float_field(&rec, j + 1, &stat_names[j], path, line)?;
        }
    }
    for id in 0..p {
        if !seen.contains_key(&id) {
            warn!(
                "{}: no box-score row for player {id} ({}); using zeros",
                path.display(),
                players.name(id).unwrap_or("?")
            );
        }
    }
    BoxScoreTable::new(p, stat_names, data)
}

pub fn write_box_scores(path: &Path, table: &BoxScoreTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    let mut header = vec!["player_id".to_string()];
    header.extend(table.stat_names().iter().cloned());
    w.write_record(&header).map_err(&err)?;
    for i in 0..table.p() {
        let mut row = vec![i.to_string()];
        row.extend(table.row(i).iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_vegas_lines(path: &Path) -> Result<VegasLines> {
    let mut rdr = reader(path)?;
    expect_header(&mut rdr, path, LINES_HEADER)?;
    let mut lines = BTreeMap::new();
    for r in records(&mut rdr, path) {
        let (line, rec) = r?;
        let game: u64 = field(&rec, 0, "game_id", path, line)?;
        let value = float_field(&rec, 1, "home_line", path, line)?;
        if lines.insert(game, value).is_some() {
            return Err(Error::parse(path, line, format!("duplicate game id {game}")));
        }
    }
    VegasLines::new(lines)
}

pub fn write_vegas_lines(path: &Path, lines: &VegasLines) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    w.write_record(LINES_HEADER).map_err(&err)?;
    for (g, v) in lines.iter() {
        w.write_record([g.to_string(), v.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn ten_players(dir: &Path) -> PlayerTable {
        let mut body = String::from("player_id,name\n");
        for i in 0..12 {
            body.push_str(&format!("{i},Player {i}\n"));
        }
        load_players(&write_file(dir, "players.csv", &body)).unwrap()
    }

    #[test]
    fn players_basic_and_gap() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_file(dir.path(), "a.csv", "player_id,name\n0,A\n1,B\n");
        let t = load_players(&ok).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.name(1), Some("B"));

        let gap = write_file(dir.path(), "b.csv", "player_id,name\n0,A\n2,B\n");
        let err = load_players(&gap).unwrap_err().to_string();
        assert!(err.contains("non-dense ids"), "{err}");
        assert!(err.contains(":3:"), "{err}");

        let dup = write_file(dir.path(), "c.csv", "player_id,name\n0,A\n0,B\n");
        assert!(matches!(load_players(&dup), Err(Error::Parse { line: 3, .. })));

        let header = write_file(dir.path(), "d.csv", "id,name\n0,A\n");
        assert!(matches!(load_players(&header), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn stint_row_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let players = ten_players(dir.path());
        let h = STINTS_HEADER.join(",");
        let ok = write_file(dir.path(), "s.csv", &format!("{h}\n7,12.0,4,0,1,2,3,4,5,6,7,8,9\n"));
        let set = load_stints(&ok, &players).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.stints()[0].margin, 4.0);
        assert_eq!(set.stints()[0].game_id, 7);

        let neg = write_file(dir.path(), "n.csv", &format!("{h}\n7,-1,4,0,1,2,3,4,5,6,7,8,9\n"));
        assert!(matches!(load_stints(&neg, &players), Err(Error::Parse { line: 2, .. })));
        let dup = write_file(dir.path(), "d.csv", &format!("{h}\n7,1,4,0,1,2,3,4,5,6,7,8,9\n7,1,4,0,1,2,3,4,5,6,7,8,0\n"));
        assert!(matches!(load_stints(&dup, &players), Err(Error::Parse { line: 3, .. })));
        let unknown = write_file(dir.path(), "u.csv", &format!("{h}\n7,1,4,0,1,2,3,4,5,6,7,8,99\n"));
        assert!(matches!(load_stints(&unknown, &players), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn stints_regrouped_by_game() {
        let dir = tempfile::tempdir().unwrap();
        let players = ten_players(dir.path());
        let h = STINTS_HEADER.join(",");
        let body = format!(
            "{h}\n2,1,1,0,1,2,3,4,5,6,7,8,9\n1,1,2,0,1,2,3,4,5,6,7,8,9\n2,1,3,0,1,2,3,4,5,6,7,8,9\n"
        );
        let set = load_stints(&write_file(dir.path(), "s.csv", &body), &players).unwrap();
        let margins: Vec<f64> = set.stints().iter().map(|s| s.margin).collect();
        assert_eq!(margins, vec![1.0, 3.0, 2.0]);
        assert_eq!(set.game_ids(), vec![2, 1]);
    }

    #[test]
    fn box_scores_missing_row_and_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let players = load_players(&write_file(dir.path(), "p.csv", "player_id,name\n0,A\n1,B\n")).unwrap();
        let full = write_file(dir.path(), "b.csv", "player_id,pts,reb,ast\n0,1,2,3\n1,4,5,6\n");
        let t = load_box_scores(&full, &players).unwrap();
        assert_eq!((t.p(), t.d()), (2, 3));
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(t.stat_names(), &["pts", "reb", "ast"]);

        let missing = write_file(dir.path(), "m.csv", "player_id,pts,reb,ast\n0,1,2,3\n");
        let t = load_box_scores(&missing, &players).unwrap();
        assert_eq!(t.row(1), &[0.0, 0.0, 0.0]);

        let bad = write_file(dir.path(), "x.csv", "player_id,pts\n0,abc\n");
        assert!(matches!(load_box_scores(&bad, &players), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn lines_basic_and_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_file(dir.path(), "l.csv", "game_id,home_line\n3,-2.5\n");
        let lines = load_vegas_lines(&ok).unwrap();
        assert_eq!(lines.get(3), Some(-2.5));
        let dup = write_file(dir.path(), "d.csv", "game_id,home_line\n3,1\n3,2\n");
        assert!(matches!(load_vegas_lines(&dup), Err(Error::Parse { line: 3, .. })));
    }
}
