//! Piecewise road profiles and the built-in eight-road test suite.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KMPH: f64 = 1.0 / 3.6;

/// Cruise target of the built-in suite, 80 km/h.
pub const CRUISE_KMPH: f64 = 80.0;
/// Zone 1 limiter, 50 km/h.
pub const ZONE1_KMPH: f64 = 50.0;
/// Zone 2 limiter, 20 km/h.
pub const ZONE2_KMPH: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    /// m
    pub length: f64,
    /// rise over run
    pub grade: f64,
    /// m/s; `None` means the cruise target applies.
    pub speed_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadProfile {
    pub name: String,
    pub segments: Vec<RoadSegment>,
    /// m/s
    pub cruise_target: f64,
}

impl RoadProfile {
    pub fn new(name: impl Into<String>, segments: Vec<RoadSegment>, cruise_target: f64) -> Result<Self> {
        let road = RoadProfile {
            name: name.into(),
            segments,
            cruise_target,
        };
        road.validate()?;
        Ok(road)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("road {}: {msg}", self.name)));
        if self.segments.is_empty() {
            return bad("no segments".into());
        }
        if !(self.cruise_target > 0.0) {
            return bad("cruise target must be positive".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.length > 0.0) {
                return bad(format!("segment {i} length must be positive"));
            }
            if !(s.grade.abs() < 0.3) {
                return bad(format!("segment {i} grade out of range"));
            }
            if let Some(v) = s.speed_limit {
                if !(v > 0.0) {
                    return bad(format!("segment {i} speed limit must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// True when every segment is level.
    pub fn is_flat(&self) -> bool {
        self.segments.iter().all(|s| s.grade == 0.0)
    }

    /// Start position of every segment, in order.
    pub fn segment_starts(&self) -> impl Iterator<Item = (f64, &RoadSegment)> {
        self.segments.iter().scan(0.0, |start, seg| {
            let here = *start;
            *start += seg.length;
            Some((here, seg))
        })
    }

    /// Effective limit of a segment: its own limiter or the cruise target.
    pub fn effective_limit(&self, seg: &RoadSegment) -> f64 {
        seg.speed_limit.unwrap_or(self.cruise_target)
    }

    /// Segment containing `position`; segments are half-open `[start, end)`
    /// and positions past the end map to the last segment.
    pub fn segment_at(&self, position: f64) -> Result<&RoadSegment> {
        if !(position >= 0.0) {
            return Err(Error::Simulation(format!(
                "road {}: invalid position {position}",
                self.name
            )));
        }
        let mut end = 0.0;
        for seg in &self.segments {
            end += seg.length;
            if position < end {
                return Ok(seg);
            }
        }
        Ok(self.segments.last().expect("validated non-empty"))
    }

    pub fn grade_at(&self, position: f64) -> Result<f64> {
        Ok(self.segment_at(position)?.grade)
    }

    pub fn limit_at(&self, position: f64) -> Result<f64> {
        let seg = self.segment_at(position)?;
        Ok(self.effective_limit(seg))
    }

    pub fn to_file(&self) -> RoadFile {
        RoadFile {
            name: self.name.clone(),
            cruise_target_kmph: to_kmph(self.cruise_target),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentFile {
                    length_m: s.length,
                    grade_percent: round9(s.grade * 100.0),
                    speed_limit_kmph: s.speed_limit.map(to_kmph),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &RoadFile) -> Result<Self> {
        RoadProfile::new(
            file.name.clone(),
            file.segments
                .iter()
                .map(|s| RoadSegment {
                    length: s.length_m,
                    grade: s.grade_percent / 100.0,
                    speed_limit: s.speed_limit_kmph.map(|v| v * KMPH),
                })
                .collect(),
            file.cruise_target_kmph * KMPH,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RoadFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(&file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("road file serializes") + "\n"
    }
}

// Speeds in files are km/h; values are rounded to 9 decimals so that
// profiles defined in whole km/h survive a save/load cycle bit-exactly.
fn to_kmph(v: f64) -> f64 {
    round9(v * 3.6)
}

fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// On-disk road description. Speeds in km/h, grades in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadFile {
    pub name: String,
    pub cruise_target_kmph: f64,
    pub segments: Vec<SegmentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub length_m: f64,
    pub grade_percent: f64,
    pub speed_limit_kmph: Option<f64>,
}

fn seg(length: f64, grade_percent: f64, limit_kmph: Option<f64>) -> RoadSegment {
    RoadSegment {
        length,
        grade: grade_percent / 100.0,
        speed_limit: limit_kmph.map(|v| v * KMPH),
    }
}

/// The eight built-in test roads.
///
/// Roads 1-3 are level, 4-5 carry sustained grades, 6-7 roll at ±2 %, and
/// road 8 is a short mixed road. Roads 1-7 each hold a 50 km/h and a
/// 20 km/h limit zone of 400 m.
pub fn builtin_suite() -> Vec<RoadProfile> {
    let z1 = Some(ZONE1_KMPH);
    let z2 = Some(ZONE2_KMPH);
    let cruise = CRUISE_KMPH * KMPH;
    let roads = vec![
        (
            "road-1",
            vec![seg(800.0, 0.0, None), seg(400.0, 0.0, z1), seg(800.0, 0.0, None), seg(400.0, 0.0, z2), seg(600.0, 0.0, None)],
        ),
        (
            "road-2",
            vec![seg(600.0, 0.0, None), seg(400.0, 0.0, z2), seg(1000.0, 0.0, None), seg(400.0, 0.0, z1), seg(600.0, 0.0, None)],
        ),
        (
            "road-3",
            vec![seg(1200.0, 0.0, None), seg(400.0, 0.0, z1), seg(400.0, 0.0, z2), seg(1000.0, 0.0, None)],
        ),
        (
            "road-4",
            vec![seg(800.0, 3.0, None), seg(400.0, 3.0, z1), seg(800.0, 3.0, None), seg(400.0, 3.0, z2), seg(600.0, 3.0, None)],
        ),
        (
            "road-5",
            vec![
                seg(700.0, 5.0, None),
                seg(400.0, 5.0, z1),
                seg(400.0, 5.0, None),
                seg(400.0, -5.0, None),
                seg(400.0, -5.0, z2),
                seg(700.0, -5.0, None),
            ],
        ),
        (
            "road-6",
            vec![
                seg(300.0, 2.0, None),
                seg(300.0, -2.0, None),
                seg(400.0, 2.0, z1),
                seg(300.0, -2.0, None),
                seg(300.0, 2.0, None),
                seg(400.0, -2.0, z2),
                seg(300.0, 2.0, None),
                seg(300.0, -2.0, None),
                seg(400.0, 2.0, None),
            ],
        ),
        (
            "road-7",
            vec![
                seg(500.0, -2.0, None),
                seg(500.0, 2.0, None),
                seg(400.0, -2.0, z2),
                seg(500.0, 2.0, None),
                seg(400.0, -2.0, z1),
                seg(700.0, 2.0, None),
            ],
        ),
        (
            "road-8",
            vec![seg(400.0, 0.0, None), seg(400.0, 0.0, z1), seg(300.0, 2.0, None), seg(400.0, -2.0, None)],
        ),
    ];
    roads
        .into_iter()
        .map(|(name, segments)| RoadProfile::new(name, segments, cruise).expect("built-in road is valid"))
        .collect()
}
