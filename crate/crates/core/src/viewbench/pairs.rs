use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Overlap difficulty bins: [5, 15), [15, 25) and [25, 35) percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OverlapBin {
    #[serde(rename = "5-15")]
    Low,
    #[serde(rename = "15-25")]
    Mid,
    #[serde(rename = "25-35")]
    High,
}

impl OverlapBin {
    pub const ALL: [OverlapBin; 3] = [OverlapBin::Low, OverlapBin::Mid, OverlapBin::High];

    pub fn from_ratio(ratio: f64) -> Option<Self> {
        if (0.05..0.15).contains(&ratio) {
            Some(OverlapBin::Low)
        } else if (0.15..0.25).contains(&ratio) {
            Some(OverlapBin::Mid)
        } else if (0.25..0.35).contains(&ratio) {
            Some(OverlapBin::High)
        } else {
            None
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OverlapBin::Low => "5-15",
            OverlapBin::Mid => "15-25",
            OverlapBin::High => "25-35",
        }
    }
}

/// A candidate frame pair with its overlap ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    pub source: String,
    pub target: String,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPairRecord {
    pub source: String,
    pub target: String,
    pub overlap: f64,
    pub bin: OverlapBin,
}

impl ViewPairRecord {
    /// `None` when the ratio falls outside every bin.
    pub fn new(pair: &FramePair) -> Option<Self> {
        OverlapBin::from_ratio(pair.overlap).map(|bin| Self {
            source: pair.source.clone(),
            target: pair.target.clone(),
            overlap: pair.overlap,
            bin,
        })
    }
}

/// Keep pairs with overlap in [0.05, 0.35), bin them, and draw up to
/// `per_bin` per bin uniformly without replacement. Output is grouped by bin
/// and keeps input order within a bin.
pub fn bin_and_sample_pairs(candidates: &[FramePair], per_bin: usize, seed: u64) -> Vec<ViewPairRecord> {
    let mut out = Vec::new();
    for (stream, bin) in OverlapBin::ALL.into_iter().enumerate() {
        let members: Vec<ViewPairRecord> = candidates
            .iter()
            .filter_map(ViewPairRecord::new)
            .filter(|r| r.bin == bin)
            .collect();
        if members.len() <= per_bin {
            out.extend(members);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let mut chosen = sample(&mut rng, members.len(), per_bin).into_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| members[i].clone()));
    }
    out
}
