//! Shared small types: planar points, location estimates and method tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Localization methods that can be requested in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "ELM")]
    Elm,
    #[serde(rename = "RF")]
    RandomForest,
    #[serde(rename = "GI-LS")]
    GiLs,
    #[serde(rename = "GD-LS")]
    GdLs,
    #[serde(rename = "RSS-Match")]
    RssMatch,
    #[serde(rename = "RSSR")]
    Rssr,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Knn,
        Method::Elm,
        Method::RandomForest,
        Method::GiLs,
        Method::GdLs,
        Method::RssMatch,
        Method::Rssr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Knn => "KNN",
            Method::Elm => "ELM",
            Method::RandomForest => "RF",
            Method::GiLs => "GI-LS",
            Method::GdLs => "GD-LS",
            Method::RssMatch => "RSS-Match",
            Method::Rssr => "RSSR",
        }
    }

    /// Registry key of the classifier behind a single-classifier method.
    pub fn classifier_key(&self) -> Option<&'static str> {
        match self {
            Method::Knn => Some("knn"),
            Method::Elm => Some("elm"),
            Method::RandomForest => Some("rf"),
            _ => None,
        }
    }

    pub fn is_fusion(&self) -> bool {
        matches!(self, Method::GiLs | Method::GdLs)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| crate::Error::domain(format!("unknown method `{s}`")))
    }
}

/// A position estimate on the z = 0 plane, tagged with the producing method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationEstimate {
    pub position: Point2,
    pub method: Method,
    /// Set when an iterative solver did not converge and a fallback was returned.
    pub degraded: bool,
}

impl LocationEstimate {
    pub fn new(position: Point2, method: Method) -> Self {
        LocationEstimate {
            position,
            method,
            degraded: false,
        }
    }
}
