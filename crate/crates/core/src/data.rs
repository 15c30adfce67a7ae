//! Match records, CSV ingestion and chronological splits.
//!
//! A dataset file is UTF-8 CSV with the header
//! `match_id,date,competition,team1,team2,home,lineup1,lineup2,outcome`.
//! Lineups are eleven player ids joined by `;`, `home` is `1`, `2` or `0`
//! (neutral ground) and `outcome` is `W`, `D` or `L` from team1's side.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Number of starting players per side.
pub const LINEUP_SIZE: usize = 11;

pub const CSV_HEADER: [&str; 9] = [
    "match_id",
    "date",
    "competition",
    "team1",
    "team2",
    "home",
    "lineup1",
    "lineup2",
    "outcome",
];

const LINEUP_SEPARATOR: char = ';';
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlayerId(String);

impl PlayerId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let bad = |c: char| matches!(c, ';' | ',' | '"' | '\n' | '\r') || c.is_whitespace();
        if id.is_empty() || id.chars().any(bad) {
            return Err(Error::InvalidPlayerId(id));
        }
        Ok(PlayerId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ternary result, always from team1's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Team1Win,
    Draw,
    Team2Win,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Team1Win, Outcome::Draw, Outcome::Team2Win];

    pub fn token(self) -> &'static str {
        match self {
            Outcome::Team1Win => "W",
            Outcome::Draw => "D",
            Outcome::Team2Win => "L",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "W" => Some(Outcome::Team1Win),
            "D" => Some(Outcome::Draw),
            "L" => Some(Outcome::Team2Win),
            _ => None,
        }
    }

    /// The same result seen from team2's side.
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Team1Win => Outcome::Team2Win,
            Outcome::Draw => Outcome::Draw,
            Outcome::Team2Win => Outcome::Team1Win,
        }
    }

    /// Elo score for team1: 1, 1/2 or 0.
    pub fn score(self) -> f64 {
        match self {
            Outcome::Team1Win => 1.0,
            Outcome::Draw => 0.5,
            Outcome::Team2Win => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Home {
    Team1,
    Team2,
    Neutral,
}

impl Home {
    pub fn token(self) -> &'static str {
        match self {
            Home::Team1 => "1",
            Home::Team2 => "2",
            Home::Neutral => "0",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "1" => Some(Home::Team1),
            "2" => Some(Home::Team2),
            "0" => Some(Home::Neutral),
            _ => None,
        }
    }

    /// Value of the home coordinate: +1, -1 or 0.
    pub fn sign(self) -> f64 {
        match self {
            Home::Team1 => 1.0,
            Home::Team2 => -1.0,
            Home::Neutral => 0.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Home::Team1 => Home::Team2,
            Home::Team2 => Home::Team1,
            Home::Neutral => Home::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub match_id: String,
    pub date: NaiveDate,
    pub competition: String,
    pub team1: String,
    pub team2: String,
    pub lineup1: Vec<PlayerId>,
    pub lineup2: Vec<PlayerId>,
    pub home: Home,
    pub outcome: Outcome,
}

impl MatchRecord {
    pub fn validate(&self) -> Result<()> {
        for (side, lineup) in [(1u8, &self.lineup1), (2u8, &self.lineup2)] {
            if lineup.len() != LINEUP_SIZE {
                return Err(Error::LineupSize {
                    match_id: self.match_id.clone(),
                    side,
                    len: lineup.len(),
                });
            }
        }
        let mut seen = HashSet::with_capacity(2 * LINEUP_SIZE);
        for p in self.lineup1.iter().chain(&self.lineup2) {
            if !seen.insert(p) {
                return Err(Error::DuplicatePlayer {
                    match_id: self.match_id.clone(),
                    player: p.to_string(),
                });
            }
        }
        if self.team1 == self.team2 {
            return Err(Error::SameTeam(self.match_id.clone()));
        }
        Ok(())
    }

    /// The same match with team1 and team2 exchanged.
    pub fn swapped(&self) -> MatchRecord {
        MatchRecord {
            match_id: self.match_id.clone(),
            date: self.date,
            competition: self.competition.clone(),
            team1: self.team2.clone(),
            team2: self.team1.clone(),
            lineup1: self.lineup2.clone(),
            lineup2: self.lineup1.clone(),
            home: self.home.flipped(),
            outcome: self.outcome.flipped(),
        }
    }

    fn players(&self) -> impl Iterator<Item = &PlayerId> {
        self.lineup1.iter().chain(&self.lineup2)
    }
}

/// Dense indexing of player ids, in order of first registration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    ids: Vec<PlayerId>,
    index: HashMap<PlayerId, usize>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a MatchRecord>) -> Self {
        let mut registry = Registry::new();
        for rec in records {
            registry.extend(rec.players().cloned());
        }
        registry
    }

    pub fn insert(&mut self, id: PlayerId) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.clone(), i);
        self.ids.push(id);
        i
    }

    pub fn get(&self, id: &PlayerId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&PlayerId> {
        self.ids.get(index)
    }

    pub fn ids(&self) -> &[PlayerId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl Extend<PlayerId> for Registry {
    fn extend<I: IntoIterator<Item = PlayerId>>(&mut self, iter: I) {
        for id in iter {
            self.insert(id);
        }
    }
}

/// Date-ordered, validated collection of matches sharing one player registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<MatchRecord>,
    registry: Registry,
}

impl Dataset {
    /// Validates and sorts `records` (by date, then match id) and registers
    /// players in order of first appearance.
    pub fn new(mut records: Vec<MatchRecord>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for rec in &records {
            rec.validate()?;
            if !ids.insert(rec.match_id.as_str()) {
                return Err(Error::DuplicateMatch(rec.match_id.clone()));
            }
        }
        records.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.match_id.cmp(&b.match_id)));
        let registry = Registry::from_records(&records);
        Ok(Dataset { records, registry })
    }

    pub fn empty() -> Self {
        Dataset {
            records: Vec::new(),
            registry: Registry::new(),
        }
    }

    pub fn records(&self) -> &[MatchRecord] {
        &self.records
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Number of matches.
    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Number of distinct players appearing in this dataset's lineups. This
    /// can be smaller than the registry when the registry is shared.
    pub fn p(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| r.players())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Replaces the registry with `registry`, which must cover every player.
    pub fn with_registry(mut self, registry: Registry) -> Result<Self> {
        if let Some(missing) = self
            .records
            .iter()
            .flat_map(|r| r.players())
            .find(|p| registry.get(p).is_none())
        {
            return Err(Error::UnknownPlayer(missing.to_string()));
        }
        self.registry = registry;
        Ok(self)
    }

    /// Each record with team sides exchanged.
    pub fn swapped(&self) -> Dataset {
        Dataset {
            records: self.records.iter().map(MatchRecord::swapped).collect(),
            registry: self.registry.clone(),
        }
    }
}

/// Gives `first` and `second` a common registry: `first`'s players keep their
/// indices and players only in `second` are appended.
pub fn share_registry(first: Dataset, second: Dataset) -> (Dataset, Dataset) {
    let mut registry = first.registry.clone();
    registry.extend(second.registry.ids().iter().cloned());
    let first = Dataset {
        registry: registry.clone(),
        ..first
    };
    let second = Dataset { registry, ..second };
    (first, second)
}

/// Splits into matches strictly before `cutoff` and matches on or after it.
/// Both halves keep the full registry of `ds`.
pub fn split_by_cutoff(ds: &Dataset, cutoff: NaiveDate) -> (Dataset, Dataset) {
    let (train, test): (Vec<_>, Vec<_>) = ds.records.iter().cloned().partition(|r| r.date < cutoff);
    (
        Dataset {
            records: train,
            registry: ds.registry.clone(),
        },
        Dataset {
            records: test,
            registry: ds.registry.clone(),
        },
    )
}

pub fn parse_dataset<R: Read>(source: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        records.push(parse_row(&row, line)?);
    }
    Dataset::new(records)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Malformed {
        line,
        message: e.to_string(),
    }
}

fn parse_row(row: &csv::StringRecord, line: u64) -> Result<MatchRecord> {
    let malformed = |message: String| Error::Malformed { line, message };
    let field = |i: usize| row.get(i).unwrap_or("");

    let match_id = field(0).to_owned();
    if match_id.is_empty() {
        return Err(malformed("empty match_id".into()));
    }
    let date = NaiveDate::parse_from_str(field(1), DATE_FORMAT)
        .map_err(|e| malformed(format!("bad date `{}`: {e}", field(1))))?;
    let home = Home::from_token(field(5))
        .ok_or_else(|| malformed(format!("bad home flag `{}` (expected 1, 2 or 0)", field(5))))?;
    let lineup = |s: &str| -> Result<Vec<PlayerId>> {
        s.split(LINEUP_SEPARATOR)
            .map(|p| PlayerId::new(p.trim()).map_err(|e| malformed(e.to_string())))
            .collect()
    };
    let outcome = Outcome::from_token(field(8)).ok_or_else(|| Error::UnknownOutcome {
        line,
        token: field(8).to_owned(),
    })?;

    let rec = MatchRecord {
        match_id,
        date,
        competition: field(2).to_owned(),
        team1: field(3).to_owned(),
        team2: field(4).to_owned(),
        lineup1: lineup(field(6))?,
        lineup2: lineup(field(7))?,
        home,
        outcome,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_dataset<W: Write>(ds: &Dataset, sink: W) -> Result<()> {
    write_records(ds.records(), sink)
}

pub fn write_records<W: Write>(records: &[MatchRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let join = |l: &[PlayerId]| {
            l.iter()
                .map(PlayerId::as_str)
                .collect::<Vec<_>>()
                .join(";")
        };
        w.write_record([
            r.match_id.as_str(),
            &r.date.format(DATE_FORMAT).to_string(),
            &r.competition,
            &r.team1,
            &r.team2,
            r.home.token(),
            &join(&r.lineup1),
            &join(&r.lineup2),
            r.outcome.token(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
