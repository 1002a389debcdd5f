//! Wavelet filter banks: the four dual-tree families and the four DWT baselines.
//!
//! Every filter is stored in correlation form: the approximation output is
//! `a[k] = sum_j lowpass[j] * x[2k + j - origin]`, and likewise for the detail
//! branch. Both branches of a pair share one length and one origin.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2 as SQRT2};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform1d::{analyze1d, synthesize1d};

/// How a signal is continued past its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Whole-sample symmetric reflection (`... x2 x1 | x0 x1 x2 ...`).
    Symmetric,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
    /// Tap index treated as zero delay.
    pub origin: usize,
    pub extension: Extension,
    /// Sample parity on which the lowpass branch is centered (0 or 1). The
    /// highpass branch sits on the other parity. Only used by symmetric
    /// extension to mirror subbands consistently.
    pub low_phase: usize,
}

impl FilterPair {
    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    pub fn high_phase(&self) -> usize {
        1 - self.low_phase
    }

    /// Centroid of the lowpass taps relative to `origin`.
    pub fn lowpass_group_delay(&self) -> f64 {
        let s: f64 = self.lowpass.iter().sum();
        let m: f64 = self.lowpass.iter().enumerate().map(|(j, c)| j as f64 * c).sum();
        m / s - self.origin as f64
    }

    /// Checks the DC-gain normalization of both branches.
    pub fn validate(&self) -> Result<()> {
        let lo: f64 = self.lowpass.iter().sum();
        let hi: f64 = self.highpass.iter().sum();
        if (lo - SQRT2).abs() > 1e-9 {
            return Err(Error::Config(format!("lowpass sums to {lo}, expected sqrt(2)")));
        }
        if hi.abs() > 1e-9 {
            return Err(Error::Config(format!("highpass sums to {hi}, expected 0")));
        }
        if self.highpass.len() != self.lowpass.len() || self.origin >= self.lowpass.len() {
            return Err(Error::Config("malformed filter pair".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualTreeId {
    Antonini,
    LeGall,
    NearSymA,
    NearSymB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DwtId {
    Haar,
    Coif1,
    Bior44,
    Daub4,
}

/// Any supported family, as selected by `--wavelet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Wavelet {
    DualTree(DualTreeId),
    Dwt(DwtId),
}

impl Wavelet {
    pub const ALL: [Wavelet; 8] = [
        Wavelet::DualTree(DualTreeId::Antonini),
        Wavelet::DualTree(DualTreeId::LeGall),
        Wavelet::DualTree(DualTreeId::NearSymA),
        Wavelet::DualTree(DualTreeId::NearSymB),
        Wavelet::Dwt(DwtId::Haar),
        Wavelet::Dwt(DwtId::Coif1),
        Wavelet::Dwt(DwtId::Bior44),
        Wavelet::Dwt(DwtId::Daub4),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Wavelet::DualTree(DualTreeId::Antonini) => "antonini",
            Wavelet::DualTree(DualTreeId::LeGall) => "legall",
            Wavelet::DualTree(DualTreeId::NearSymA) => "nearsyma",
            Wavelet::DualTree(DualTreeId::NearSymB) => "nearsymb",
            Wavelet::Dwt(DwtId::Haar) => "haar",
            Wavelet::Dwt(DwtId::Coif1) => "coif1",
            Wavelet::Dwt(DwtId::Bior44) => "bior44",
            Wavelet::Dwt(DwtId::Daub4) => "daub4",
        }
    }
}

impl fmt::Display for Wavelet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-', '.'], "");
        Wavelet::ALL
            .into_iter()
            .find(|w| w.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown wavelet family `{s}`")))
    }
}

impl From<Wavelet> for String {
    fn from(w: Wavelet) -> String {
        w.name().to_string()
    }
}

impl TryFrom<String> for Wavelet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for DualTreeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<Wavelet>() {
            Ok(Wavelet::DualTree(id)) => Ok(id),
            _ => Err(Error::Config(format!("unknown dual-tree family `{s}`"))),
        }
    }
}

impl FromStr for DwtId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<Wavelet>() {
            Ok(Wavelet::Dwt(id)) => Ok(id),
            _ => Err(Error::Config(format!("unknown dwt family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualTreeFilterSet {
    pub id: DualTreeId,
    pub tree_a_analysis: FilterPair,
    pub tree_a_synthesis: FilterPair,
    pub tree_b_analysis: FilterPair,
    pub tree_b_synthesis: FilterPair,
}

impl DualTreeFilterSet {
    pub fn new(id: DualTreeId) -> Self {
        let (h0, g0) = biorthogonal_lowpass(id);
        build_dual_tree(id, &h0, &g0)
    }

    /// `(analysis, synthesis)` for tree 0 (a) or 1 (b).
    pub fn tree(&self, t: usize) -> (&FilterPair, &FilterPair) {
        if t == 0 {
            (&self.tree_a_analysis, &self.tree_a_synthesis)
        } else {
            (&self.tree_b_analysis, &self.tree_b_synthesis)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwtFilterSet {
    pub id: DwtId,
    pub analysis: FilterPair,
    pub synthesis: FilterPair,
}

impl DwtFilterSet {
    pub fn new(id: DwtId) -> Self {
        match id {
            DwtId::Haar => orthogonal_set(id, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], 0),
            DwtId::Coif1 => orthogonal_set(id, &COIF1, 2),
            DwtId::Daub4 => orthogonal_set(id, &DB4, 3),
            DwtId::Bior44 => {
                let (h0, g0) = biorthogonal_lowpass(DualTreeId::Antonini);
                let tree = build_dual_tree(DualTreeId::Antonini, &h0, &g0);
                DwtFilterSet { id, analysis: tree.tree_a_analysis, synthesis: tree.tree_a_synthesis }
            }
        }
    }
}

pub fn get_dual_tree_set(id: &str) -> Result<DualTreeFilterSet> {
    Ok(DualTreeFilterSet::new(id.parse()?))
}

pub fn get_dwt_set(id: &str) -> Result<DwtFilterSet> {
    Ok(DwtFilterSet::new(id.parse()?))
}

/// Either kind of filter bank, for routines that accept both.
#[derive(Debug, Clone, Copy)]
pub enum FilterSetRef<'a> {
    DualTree(&'a DualTreeFilterSet),
    Dwt(&'a DwtFilterSet),
}

impl<'a> From<&'a DualTreeFilterSet> for FilterSetRef<'a> {
    fn from(s: &'a DualTreeFilterSet) -> Self {
        FilterSetRef::DualTree(s)
    }
}

impl<'a> From<&'a DwtFilterSet> for FilterSetRef<'a> {
    fn from(s: &'a DwtFilterSet) -> Self {
        FilterSetRef::Dwt(s)
    }
}

/// Largest `|x - synth(analyze(x))|` over a fixed-seed random signal, taken
/// over every tree of the set.
pub fn check_perfect_reconstruction<'a>(set: impl Into<FilterSetRef<'a>>, length: usize) -> Result<f64> {
    if length == 0 || length % 2 != 0 {
        return Err(Error::OddLength(length));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_F117);
    let x: Vec<f64> = (0..length).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pairs: Vec<(&FilterPair, &FilterPair)> = match set.into() {
        FilterSetRef::DualTree(s) => vec![s.tree(0), s.tree(1)],
        FilterSetRef::Dwt(s) => vec![(&s.analysis, &s.synthesis)],
    };
    let mut worst = 0.0f64;
    for (ana, syn) in pairs {
        let (a, d) = analyze1d(&x, ana)?;
        let y = synthesize1d(&a, &d, syn)?;
        let err = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    Ok(worst)
}

// Lowpass prototypes (unit DC gain, symmetric, odd length).

const LEGALL_H0: [f64; 5] = [-0.125, 0.25, 0.75, 0.25, -0.125];
const LEGALL_G0: [f64; 3] = [0.25, 0.5, 0.25];

const NEAR_SYM_A_H0: [f64; 5] = [-0.05, 0.25, 0.6, 0.25, -0.05];
const NEAR_SYM_A_G0: [f64; 7] = [
    -3.0 / 280.0,
    -15.0 / 280.0,
    73.0 / 280.0,
    170.0 / 280.0,
    73.0 / 280.0,
    -15.0 / 280.0,
    -3.0 / 280.0,
];

// Half filters from the center tap outward.
const NEAR_SYM_B_H0_HALF: [f64; 7] = [
    2844.0 / 5120.0,
    1520.0 / 5120.0,
    -247.0 / 5120.0,
    -240.0 / 5120.0,
    114.0 / 5120.0,
    0.0,
    -9.0 / 5120.0,
];
const NEAR_SYM_B_G0_HALF: [f64; 10] = [
    0.5594308035714286,
    0.29975760323660716,
    -0.05168805803571428,
    -0.05564313616071428,
    0.023856026785714284,
    0.007156808035714285,
    -0.0018833705357142855,
    -0.0013419015066964285,
    0.0,
    7.062639508928571e-05,
];

// Cohen-Daubechies-Feauveau 9/7.
const ANTONINI_H0_HALF: [f64; 5] = [
    0.602_949_018_236_360_3,
    0.266_864_118_442_874_95,
    -0.078_223_266_528_990_26,
    -0.016_864_118_442_874_954,
    0.026_748_757_410_810_088,
];
const ANTONINI_G0_HALF: [f64; 4] = [
    0.557_543_526_228_500_2,
    0.295_635_881_557_125_05,
    -0.028_771_763_114_250_091,
    -0.045_635_881_557_125_046,
];

// Orthogonal lowpass taps, already at DC gain sqrt(2).
const COIF1: [f64; 6] = [
    -0.07273261951252645,
    0.3378976624574818,
    0.8525720202116004,
    0.3848648468648578,
    -0.07273261951252645,
    -0.015655728135791993,
];
const DB4: [f64; 8] = [
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
];

fn mirror(half: &[f64]) -> Vec<f64> {
    half.iter().rev().chain(half.iter().skip(1)).copied().collect()
}

fn biorthogonal_lowpass(id: DualTreeId) -> (Vec<f64>, Vec<f64>) {
    match id {
        DualTreeId::LeGall => (LEGALL_H0.to_vec(), LEGALL_G0.to_vec()),
        DualTreeId::NearSymA => (NEAR_SYM_A_H0.to_vec(), NEAR_SYM_A_G0.to_vec()),
        DualTreeId::NearSymB => (mirror(&NEAR_SYM_B_H0_HALF), mirror(&NEAR_SYM_B_G0_HALF)),
        DualTreeId::Antonini => (mirror(&ANTONINI_H0_HALF), mirror(&ANTONINI_G0_HALF)),
    }
}

/// `(-1)^(n - center) * f[n]`, so the center tap keeps its sign.
fn modulate(f: &[f64]) -> Vec<f64> {
    let c = (f.len() - 1) / 2;
    f.iter()
        .enumerate()
        .map(|(n, v)| if (n + c) % 2 == 0 { *v } else { -*v })
        .collect()
}

/// Places two odd-length symmetric filters so that the lowpass is centered at
/// `origin + lo_shift` and the highpass at `origin + hi_shift`. Returns the taps
/// indexed relative to a common, externally chosen frame.
fn place(lo: &[f64], hi: &[f64], lo_shift: i64, hi_shift: i64) -> Vec<(i64, f64, f64)> {
    let hl = (lo.len() as i64 - 1) / 2;
    let hh = (hi.len() as i64 - 1) / 2;
    let mut taps = Vec::new();
    for (i, v) in lo.iter().enumerate() {
        taps.push((lo_shift - hl + i as i64, *v, 0.0));
    }
    for (i, v) in hi.iter().enumerate() {
        taps.push((hi_shift - hh + i as i64, 0.0, *v));
    }
    taps
}

fn pack(tree_taps: [Vec<(i64, f64, f64)>; 2], low_phases: [usize; 2]) -> [FilterPair; 2] {
    let min = tree_taps.iter().flatten().map(|t| t.0).min().unwrap_or(0);
    let max = tree_taps.iter().flatten().map(|t| t.0).max().unwrap_or(0);
    let len = (max - min + 1) as usize;
    let origin = (-min) as usize;
    let build = |taps: &Vec<(i64, f64, f64)>, low_phase| {
        let mut lowpass = vec![0.0; len];
        let mut highpass = vec![0.0; len];
        for &(pos, l, h) in taps {
            lowpass[(pos - min) as usize] += l;
            highpass[(pos - min) as usize] += h;
        }
        FilterPair { lowpass, highpass, origin, extension: Extension::Symmetric, low_phase }
    };
    [build(&tree_taps[0], low_phases[0]), build(&tree_taps[1], low_phases[1])]
}

fn build_dual_tree(id: DualTreeId, h0: &[f64], g0: &[f64]) -> DualTreeFilterSet {
    let scale = |f: &[f64]| f.iter().map(|v| v * SQRT2).collect::<Vec<_>>();
    let h0 = scale(h0);
    let g0 = scale(g0);
    let h1 = modulate(&g0);
    let g1 = modulate(&h0);
    // Tree a: lowpass on even samples, highpass on odd. Tree b swaps the
    // parities, which delays its lowpass by one sample.
    let [a_ana, b_ana] = pack([place(&h0, &h1, 0, 1), place(&h0, &h1, 1, 0)], [0, 1]);
    let [a_syn, b_syn] = pack([place(&g0, &g1, 0, 1), place(&g0, &g1, 1, 0)], [0, 1]);
    DualTreeFilterSet {
        id,
        tree_a_analysis: a_ana,
        tree_a_synthesis: a_syn,
        tree_b_analysis: b_ana,
        tree_b_synthesis: b_syn,
    }
}

fn orthogonal_set(id: DwtId, lo: &[f64], origin: usize) -> DwtFilterSet {
    let n = lo.len();
    let hi: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { lo[n - 1 - i] } else { -lo[n - 1 - i] })
        .collect();
    let pair = FilterPair {
        lowpass: lo.to_vec(),
        highpass: hi,
        origin,
        extension: Extension::Periodic,
        low_phase: 0,
    };
    DwtFilterSet { id, analysis: pair.clone(), synthesis: pair }
}
