//! Independent oracles and fixtures shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use transport_tmle_core::dgp::{replication_rng, transport_missing, transport_survival, MissingDgp, ENUMERATION_CAP};
use transport_tmle_core::eic::MissingLaw;
use transport_tmle_core::nuisance::{DensityRatio, HazardFits, HazardSpec, NuisanceSource, NuisanceSpec};
use transport_tmle_core::survival::{
    ipctw_estimate, survival_remainder_mc, BoundHazards, HazardFluctuation, SurvivalConfig, SurvivalCurves,
};
use transport_tmle_core::tmle::{exact_remainder_mc, TmleConfig};
use transport_tmle_core::{
    DesignSpec, Link, MissingDataset, NuisanceModel, ObservedRecord, Schema, SurvivalDataset, SurvivalRecord,
    TimeEncoding, Truncation,
};

pub type Key = Vec<u64>;

pub fn key(x: &[f64]) -> Key {
    x.iter().map(|v| v.to_bits()).collect()
}

/// `(1/n_t) Σ_{target} Σ_w P̂(W=w | V, S=1) Ȳ(a, w)` over observed cells.
pub fn missing_plug_in(data: &MissingDataset) -> [f64; 2] {
    let mut w_given_v: BTreeMap<Key, BTreeMap<Key, f64>> = BTreeMap::new();
    let mut v_count: BTreeMap<Key, f64> = BTreeMap::new();
    let mut cell: [BTreeMap<Key, (f64, f64)>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for r in data.records().iter().filter(|r| r.s) {
        let w = r.w.as_ref().unwrap();
        *w_given_v.entry(key(&r.v)).or_default().entry(key(w)).or_default() += 1.0;
        *v_count.entry(key(&r.v)).or_default() += 1.0;
        if let Some(y) = r.y {
            let e = cell[usize::from(r.a.unwrap())].entry(key(w)).or_default();
            e.0 += y;
            e.1 += 1.0;
        }
    }
    let targets: Vec<&ObservedRecord> = data.records().iter().filter(|r| !r.s).collect();
    let mut psi = [0.0; 2];
    for k in 0..2 {
        for r in &targets {
            let kv = key(&r.v);
            let total = v_count[&kv];
            for (w, count) in &w_given_v[&kv] {
                let (s, m) = cell[k][w];
                psi[k] += count / total * s / m;
            }
        }
        psi[k] /= targets.len() as f64;
    }
    psi
}

/// `(1/n_t) Σ_{target} Π_{t≤t0} (1 − d(W,a,t)/r(W,a,t))`.
pub fn survival_plug_in(data: &SurvivalDataset) -> [f64; 2] {
    let t0 = data.t0();
    let mut events: BTreeMap<(Key, bool, u32), (f64, f64)> = BTreeMap::new();
    for r in data.records().iter().filter(|r| r.s) {
        let tt = r.t_tilde.unwrap();
        for t in 1..=tt {
            let e = events.entry((key(&r.w), r.a.unwrap(), t)).or_default();
            e.1 += 1.0;
            if t == tt && r.delta_event.unwrap() {
                e.0 += 1.0;
            }
        }
    }
    let targets: Vec<&SurvivalRecord> = data.records().iter().filter(|r| !r.s).collect();
    let mut psi = [0.0; 2];
    for (k, arm) in [false, true].into_iter().enumerate() {
        for r in &targets {
            let mut s = 1.0;
            for t in 1..=t0 {
                let (d, n) = events[&(key(&r.w), arm, t)];
                s *= 1.0 - d / n;
            }
            psi[k] += s;
        }
        psi[k] /= targets.len() as f64;
    }
    psi
}

/// The built-in missing-outcome generator with every covariate observed in
/// the target population.
pub fn v_equals_w_dgp() -> MissingDgp {
    let mut dgp = transport_missing();
    dgp.v_columns = dgp.w_columns();
    dgp.w_only_columns.clear();
    dgp.w_only.clear();
    dgp.v_support = (0..8)
        .map(|m: u32| (0..3).map(|j| f64::from((m >> j) & 1)).collect())
        .collect();
    dgp.v_prob_source = vec![0.125; 8];
    dgp.v_prob_target = vec![0.05, 0.1, 0.1, 0.15, 0.1, 0.15, 0.15, 0.2];
    dgp
}

/// Survival data with `tau = t0 = 1` and the missing-outcome data it
/// induces (`Y = 1` for survivors), with configurations that agree on the
/// nuisance models: no censoring and no missingness.
pub fn single_period_pair() -> (SurvivalDataset, SurvivalConfig, MissingDataset, TmleConfig) {
    let w_cols = vec!["w1".to_string(), "w2".to_string()];
    let mut surv = Vec::new();
    let mut miss = Vec::new();
    let schema = Schema::missing_outcome(&w_cols, &w_cols);
    let v_index = schema.v_index();
    for i in 0..400u32 {
        let w = vec![f64::from(i % 2), f64::from((i / 2) % 3) * 0.5];
        if i % 3 == 0 {
            surv.push(SurvivalRecord::target(w.clone()));
            miss.push(ObservedRecord::target(w));
            continue;
        }
        let a = (i * 7) % 5 < 2;
        let event = (i * 11 + u32::from(a)) % 4 == 0 || (w[0] == 1.0 && i % 7 == 0);
        surv.push(SurvivalRecord::source(w.clone(), a, 1, event));
        miss.push(ObservedRecord::source(w, &v_index, a, Some(f64::from(u8::from(!event)))));
    }
    let sdata = SurvivalDataset::new(surv, w_cols.clone(), 1, 1).unwrap();
    let mdata = MissingDataset::new(miss, schema).unwrap();

    let wa = ["w1", "w2", "a"];
    let scfg = SurvivalConfig {
        truncation: Truncation::NONE,
        fluctuation: HazardFluctuation::RatioCovariate,
        ..SurvivalConfig::new(HazardSpec {
            lambda: NuisanceSource::Fit(DesignSpec::main_effects(&wa, Link::Logit)),
            alpha: NuisanceSource::Fixed(NuisanceModel::constant(0.0)),
            g_a: NuisanceSource::Fit(DesignSpec::main_effects(&w_cols, Link::Logit)),
            p_s_given_w: NuisanceSource::Fit(DesignSpec::main_effects(&w_cols, Link::Logit)),
            p_s1: None,
        })
    };
    let mut mspec = NuisanceSpec::main_effects(&w_cols, &w_cols);
    mspec.q_bar = NuisanceSource::Fit(DesignSpec::main_effects(&wa, Link::Logit));
    mspec.q_bar_per_arm = false;
    mspec.p_delta = NuisanceSource::Fixed(NuisanceModel::constant(1.0));
    let mcfg = TmleConfig {
        truncation: Truncation::NONE,
        ..TmleConfig::new(mspec)
    };
    (sdata, scfg, mdata, mcfg)
}

/// One population followed without censoring until the event or `tau`.
pub fn uncensored_fixture() -> (SurvivalDataset, SurvivalConfig) {
    let w_cols = vec!["w".to_string()];
    let mut recs = Vec::new();
    for i in 0..300u32 {
        let w = vec![f64::from(i % 3)];
        if i % 4 == 0 {
            recs.push(SurvivalRecord::target(w));
            continue;
        }
        let a = i % 5 < 2;
        let t = 1 + (i * 13 + u32::from(a) * 3) % 4;
        recs.push(SurvivalRecord::source(w, a, t, t < 4));
    }
    let data = SurvivalDataset::new(recs, w_cols, 2, 4).unwrap();
    let cfg = SurvivalConfig {
        truncation: Truncation::NONE,
        density_ratio: DensityRatio::Unit,
        ..SurvivalConfig::new(HazardSpec {
            lambda: NuisanceSource::Fit(
                DesignSpec::main_effects(&["a"], Link::Logit).with_time(TimeEncoding::Indicators),
            ),
            alpha: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            g_a: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            p_s_given_w: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            p_s1: None,
        })
    };
    (data, cfg)
}

/// Share of source units in each arm still event-free after `t0`.
pub fn empirical_survival_fraction(data: &SurvivalDataset) -> [f64; 2] {
    [false, true].map(|arm| {
        let units: Vec<_> = data.records().iter().filter(|r| r.s && r.a == Some(arm)).collect();
        let surviving = units.iter().filter(|r| r.t_tilde.unwrap() > data.t0()).count();
        surviving as f64 / units.len() as f64
    })
}

/// IPCTW with the true nuisances of the built-in survival generator:
/// `(estimate, MC standard error, truth)` per arm `[0, 1]`.
pub fn ipctw_under_truth(n: usize, seed: u64) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let dgp = transport_survival();
    let truth = dgp.truth(ENUMERATION_CAP).unwrap();
    let data = dgp.generate(n, seed).unwrap();
    let fits = dgp.true_fits().unwrap();
    let bound = BoundHazards::new(&fits, &dgp.w_columns, DensityRatio::OddsWithMarginal).unwrap();
    let mut pos = Default::default();
    let units: Vec<_> = data
        .records()
        .iter()
        .map(|r| bound.unit(&r.w, r.s, &mut pos).unwrap())
        .collect();
    let est = ipctw_estimate(data.records(), &units, dgp.t0, fits.p_s1);
    // the estimator is a mean of these per-unit terms
    let se = [0, 1].map(|k| {
        let terms: Vec<f64> = data
            .records()
            .iter()
            .zip(&units)
            .map(|(r, u)| {
                if r.s && r.a == Some(k == 1) && r.survives_beyond(dgp.t0) {
                    let c = SurvivalCurves::new(&u.lambda[k], &u.alpha[k]);
                    u.ratio / (fits.p_s1 * u.g[k] * c.censoring_survival_before(dgp.t0))
                } else {
                    0.0
                }
            })
            .collect();
        transport_tmle_core::stats::sample_sd(&terms) / (n as f64).sqrt()
    });
    (est, se, [truth.psi0, truth.psi1])
}

/// Which nuisance blocks of the true law are kept in a remainder check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Truth,
    QCorrect,
    GCorrect,
    Neither,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Truth, Block::QCorrect, Block::GCorrect, Block::Neither];

    pub fn name(self) -> &'static str {
        match self {
            Block::Truth => "truth",
            Block::QCorrect => "Q correct",
            Block::GCorrect => "G correct",
            Block::Neither => "neither",
        }
    }
}

fn wrong_g(law: &MissingLaw) -> MissingLaw {
    MissingLaw {
        g_a: NuisanceModel::constant(0.5),
        p_delta: NuisanceModel::constant(0.9),
        p_s_given_v: Some(NuisanceModel::constant(0.6)),
        ..law.clone()
    }
}

fn wrong_q(law: &MissingLaw) -> MissingLaw {
    MissingLaw {
        q_bar: [NuisanceModel::constant(0.3), NuisanceModel::constant(0.7)],
        q_bar_r: Some([NuisanceModel::constant(0.35), NuisanceModel::constant(0.6)]),
        ..law.clone()
    }
}

/// Monte-Carlo exact remainder `(R, MC-SE)` of the missing-outcome ATE at a
/// law that keeps the given blocks of the truth. At `Block::Truth` this is
/// the mean of the EIC.
pub fn missing_remainder(block: Block, draws: usize, seed: u64) -> (f64, f64) {
    let dgp = transport_missing();
    let truth = dgp.truth(ENUMERATION_CAP).unwrap();
    let psi_0 = [truth.psi0, truth.psi1];
    let law = dgp.true_law().unwrap();
    let sample = dgp.draw(draws, &mut replication_rng(seed, 0)).unwrap();
    // a wrong outcome block implies its own Ψ(P)
    let psi_q_wrong = [0.35, 0.6];
    let (law, psi_p) = match block {
        Block::Truth => (law, psi_0),
        Block::QCorrect => (wrong_g(&law), psi_0),
        Block::GCorrect => (wrong_q(&law), psi_q_wrong),
        Block::Neither => (wrong_g(&wrong_q(&law)), psi_q_wrong),
    };
    exact_remainder_mc(&law.bind().unwrap(), &sample, psi_p, psi_0).unwrap()
}

/// Survival analogue of [`missing_remainder`]; the outcome block is the
/// event hazard.
pub fn survival_remainder(block: Block, draws: usize, seed: u64) -> (f64, f64) {
    let dgp = transport_survival();
    let truth = dgp.truth(ENUMERATION_CAP).unwrap();
    let psi_0 = [truth.psi0, truth.psi1];
    let fits = dgp.true_fits().unwrap();
    let sample = dgp.draw(draws, &mut replication_rng(seed, 0)).unwrap();
    let wrong_g = |f: &HazardFits| HazardFits {
        alpha: NuisanceModel::constant(0.02),
        g_a: NuisanceModel::constant(0.5),
        p_s_given_w: Some(NuisanceModel::constant(0.6)),
        ..f.clone()
    };
    let flat = HazardFits {
        lambda: NuisanceModel::constant(0.15),
        ..fits.clone()
    };
    let s = 0.85f64.powi(dgp.t0 as i32);
    let (fits, psi_p) = match block {
        Block::Truth => (fits, psi_0),
        Block::QCorrect => (wrong_g(&fits), psi_0),
        Block::GCorrect => (flat, [s, s]),
        Block::Neither => (wrong_g(&flat), [s, s]),
    };
    let bound = BoundHazards::new(&fits, &dgp.w_columns, DensityRatio::default()).unwrap();
    survival_remainder_mc(&bound, &sample, dgp.t0, psi_p, psi_0).unwrap()
}
