//! Named cohort specifications.
//!
//! `eras-like` mirrors the bowel-surgery cohort layout: 34 mixed-kind
//! perioperative variables with marginals and missingness rates calibrated
//! to the published in-sample summary table, plus `anycomp` (roughly 33%
//! prevalence) and `seriouscomp` (roughly 11%) outcomes driven by
//! intraoperative burden. The remaining presets are stress shapes for
//! selector and classifier checks.

use std::str::FromStr;

use crate::data::VariableKind;

use super::{
    CohortSpec, InteractionTerm, Marginal, OutcomeModel, OutcomeTerm, SynthError, VariableSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetName {
    ErasLike,
    Separable,
    NoiseHeavy,
    Interaction,
    ThreeSignal,
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "eras-like",
        "separable",
        "noise-heavy",
        "interaction",
        "three-signal",
    ]
}

impl FromStr for PresetName {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eras-like" => Ok(Self::ErasLike),
            "separable" => Ok(Self::Separable),
            "noise-heavy" => Ok(Self::NoiseHeavy),
            "interaction" => Ok(Self::Interaction),
            "three-signal" => Ok(Self::ThreeSignal),
            other => Err(SynthError::UnknownPreset(other.to_string())),
        }
    }
}

/// Documented cohort spec for a preset name.
pub fn preset(name: &str) -> Result<CohortSpec, SynthError> {
    Ok(match PresetName::from_str(name)? {
        PresetName::ErasLike => eras_like(),
        PresetName::Separable => separable(),
        PresetName::NoiseHeavy => noise_heavy(),
        PresetName::Interaction => interaction(),
        PresetName::ThreeSignal => three_signal(),
    })
}

fn bern(name: &str, p: f64) -> VariableSpec {
    VariableSpec::new(name, VariableKind::Binary, Marginal::Bernoulli { p })
}

fn ordinal(name: &str, levels: &[&str], probs: &[f64]) -> VariableSpec {
    VariableSpec::new(
        name,
        VariableKind::Ordinal {
            levels: levels.iter().map(|s| s.to_string()).collect(),
        },
        Marginal::Categorical {
            probs: probs.to_vec(),
        },
    )
}

fn nominal(name: &str, levels: &[&str], probs: &[f64]) -> VariableSpec {
    VariableSpec::new(
        name,
        VariableKind::Nominal {
            levels: levels.iter().map(|s| s.to_string()).collect(),
        },
        Marginal::Categorical {
            probs: probs.to_vec(),
        },
    )
}

fn trunc_normal(name: &str, mean: f64, sd: f64, min: f64, max: f64) -> VariableSpec {
    VariableSpec::new(
        name,
        VariableKind::Continuous,
        Marginal::TruncNormal { mean, sd, min, max },
    )
}

fn term(var: &str, coeff: f64, center: f64) -> OutcomeTerm {
    OutcomeTerm::standardized(var, coeff, center, 1.0)
}

/// 34 perioperative variables with cohort-calibrated marginals, two outcomes,
/// and the published missingness pattern.
fn eras_like() -> CohortSpec {
    let variables = vec![
        trunc_normal("age", 65.3, 12.0, 20.0, 92.0),
        bern("ifalcohol", 305.0 / 580.0).with_missing(7.0 / 767.0),
        trunc_normal("BMI", 26.3, 4.5, 14.0, 48.3).with_missing(63.0 / 767.0),
        ordinal("ASA12.34", &["1", "3"], &[349.0 / 580.0, 231.0 / 580.0])
            .with_missing(6.0 / 767.0),
        bern("gender", 294.0 / 580.0),
        bern("ifpredisease", 182.0 / 580.0),
        bern("ifdiabet", 75.0 / 580.0),
        bern("ifheart", 61.0 / 580.0),
        bern("ifpulmonary", 76.0 / 580.0),
        bern("WHO", 69.0 / 580.0).with_missing(44.0 / 767.0),
        bern("ifsmoke", 132.0 / 580.0).with_missing(4.0 / 767.0),
        bern("prenutritioncond", 132.0 / 580.0).with_missing(48.0 / 767.0),
        bern("ifpresurgery", 304.0 / 580.0).with_missing(3.0 / 767.0),
        bern("ifradiotherapy", 44.0 / 580.0),
        bern("iflaxat", 118.0 / 580.0).with_missing(6.0 / 767.0),
        bern("ifstomacounsel", 215.0 / 580.0).with_missing(1.0 / 767.0),
        bern("ifcarbohydrate", 505.0 / 580.0).with_missing(1.0 / 767.0),
        bern("ifanemia", 78.0 / 580.0).with_missing(79.0 / 767.0),
        bern("ifopensurgery", 145.0 / 580.0),
        bern("ifothermajors", 120.0 / 580.0).with_missing(2.0 / 767.0),
        bern("ifbowelanas", 458.0 / 580.0),
        bern("ifmuscledrug", 51.0 / 580.0),
        nominal("anaesthesiatype", &["1", "2"], &[140.0 / 580.0, 440.0 / 580.0])
            .with_missing(8.0 / 767.0),
        bern("ifheartdrug", 406.0 / 580.0),
        ordinal(
            "bloodloss",
            &["1", "2", "3"],
            &[353.0 / 580.0, 128.0 / 580.0, 99.0 / 580.0],
        )
        .with_missing(4.0 / 767.0),
        bern("ifgivencolloids", 95.0 / 580.0).with_missing(16.0 / 767.0),
        ordinal(
            "givencrystalloids",
            &["1", "2", "3"],
            &[218.0 / 580.0, 292.0 / 580.0, 70.0 / 580.0],
        )
        .with_missing(16.0 / 767.0),
        trunc_normal("surgerytime", 112.0, 55.0, 15.0, 475.0),
        nominal("procedure", &["1", "2"], &[475.0 / 580.0, 105.0 / 580.0]),
        bern("ifconverted", 39.0 / 580.0),
        bern("stomaproc", 170.0 / 580.0),
        nominal(
            "ifepiorspinanaest",
            &["0", "1", "2"],
            &[63.0 / 580.0, 475.0 / 580.0, 42.0 / 580.0],
        ),
        nominal(
            "subprocedure",
            &["1", "2", "3", "4"],
            &[223.0 / 580.0, 93.0 / 580.0, 33.0 / 580.0, 231.0 / 580.0],
        ),
        bern("ifcancer", 367.0 / 580.0),
    ];

    let seriouscomp = OutcomeModel {
        name: "seriouscomp".into(),
        intercept: -2.40,
        terms: vec![
            OutcomeTerm::standardized("surgerytime", 0.55, 118.0, 55.0),
            term("bloodloss", 0.45, 0.5621),
            term("givencrystalloids", 0.35, 0.7448),
            term("WHO", 0.70, 0.1190),
            term("ifothermajors", 0.60, 0.2069),
            term("ifconverted", 0.90, 0.0672),
            term("ifgivencolloids", 0.50, 0.1638),
            term("ifopensurgery", 0.35, 0.25),
            term("ifpulmonary", 0.30, 0.1310),
            term("procedure", 0.40, 0.1810),
            OutcomeTerm::standardized("age", 0.08, 65.3, 12.0),
        ],
        interactions: vec![],
    };
    let anycomp = OutcomeModel {
        name: "anycomp".into(),
        intercept: -0.80,
        terms: vec![
            term("WHO", 0.90, 0.1190),
            OutcomeTerm::standardized("surgerytime", 0.50, 118.0, 55.0),
            term("ifothermajors", 0.70, 0.2069),
            term("ifopensurgery", 0.50, 0.25),
            term("ifpulmonary", 0.55, 0.1310),
            term("ASA12.34", 0.40, 0.3983),
            term("bloodloss", 0.30, 0.5621),
            term("givencrystalloids", 0.35, 0.7448),
            term("iflaxat", 0.20, 0.2034),
            OutcomeTerm::standardized("age", 0.06, 65.3, 12.0),
        ],
        interactions: vec![],
    };

    CohortSpec {
        n_rows: 767,
        variables,
        outcomes: vec![anycomp, seriouscomp],
        seed: 0,
    }
}

/// One dominant predictor (coefficient 10) that nearly separates the classes.
fn separable() -> CohortSpec {
    CohortSpec {
        n_rows: 600,
        variables: vec![
            trunc_normal("sep", 0.0, 1.0, -4.0, 4.0),
            trunc_normal("noise_cont", 0.0, 1.0, -4.0, 4.0),
            bern("noise_bin", 0.4),
        ],
        outcomes: vec![OutcomeModel {
            name: "y".into(),
            intercept: 0.0,
            terms: vec![OutcomeTerm::new("sep", 10.0)],
            interactions: vec![],
        }],
        seed: 0,
    }
}

/// Twelve four-level factors, none of which carries signal, at roughly 10%
/// prevalence. Multi-level factors pay a multi-coefficient AIC penalty, so a
/// null variable clearing it is a genuine selector failure rather than
/// one-degree-of-freedom sampling noise; any selector should return little
/// or nothing here.
fn noise_heavy() -> CohortSpec {
    let level_sets: [&[&str]; 2] = [&["a", "b", "c", "d"], &["1", "2", "3", "4"]];
    let prob_sets: [&[f64]; 4] = [
        &[0.25, 0.25, 0.25, 0.25],
        &[0.40, 0.30, 0.20, 0.10],
        &[0.10, 0.20, 0.30, 0.40],
        &[0.55, 0.15, 0.15, 0.15],
    ];
    let variables = (0..12)
        .map(|i| {
            let name = format!("noise{i}");
            if i % 2 == 0 {
                nominal(&name, level_sets[(i / 2) % 2], prob_sets[i % 4])
            } else {
                ordinal(&name, level_sets[(i / 2) % 2], prob_sets[i % 4])
            }
        })
        .collect();
    CohortSpec {
        n_rows: 580,
        variables,
        outcomes: vec![OutcomeModel {
            name: "y".into(),
            intercept: -2.2,
            terms: vec![],
            interactions: vec![],
        }],
        seed: 0,
    }
}

/// A BMI-by-procedure product effect with no marginal BMI effect, echoing
/// the interaction pattern seen in the cohort: obesity raises risk only for
/// rectal procedures.
fn interaction() -> CohortSpec {
    CohortSpec {
        n_rows: 767,
        variables: vec![
            trunc_normal("BMI", 26.3, 4.5, 14.0, 48.3),
            nominal("procedure", &["1", "2"], &[0.82, 0.18]),
            bern("ifopensurgery", 0.25),
            trunc_normal("age", 65.3, 12.0, 20.0, 92.0),
        ],
        outcomes: vec![OutcomeModel {
            name: "seriouscomp".into(),
            intercept: -2.35,
            terms: vec![term("procedure", 0.30, 0.18), term("ifopensurgery", 0.40, 0.25)],
            interactions: vec![InteractionTerm {
                a: OutcomeTerm::standardized("BMI", 0.80, 26.3, 4.5),
                b: OutcomeTerm::new("procedure", 1.0),
            }],
        }],
        seed: 0,
    }
}

/// Exactly three variables of different kinds carry strong signal; the other
/// seventeen are noise. Selector checks expect the three to be recovered.
fn three_signal() -> CohortSpec {
    let mut variables = vec![
        trunc_normal("sig_cont", 0.0, 1.0, -4.0, 4.0),
        bern("sig_bin", 0.4),
        ordinal("sig_ord", &["low", "mid", "high"], &[0.40, 0.35, 0.25]),
    ];
    for i in 0..8 {
        variables.push(bern(&format!("noise_b{i}"), 0.1 + 0.08 * i as f64));
    }
    for i in 0..5 {
        variables.push(trunc_normal(
            &format!("noise_c{i}"),
            i as f64,
            1.0 + i as f64 / 2.0,
            i as f64 - 5.0,
            i as f64 + 5.0,
        ));
    }
    for i in 0..3 {
        variables.push(ordinal(
            &format!("noise_o{i}"),
            &["a", "b", "c"],
            &[0.3, 0.4, 0.3],
        ));
    }
    variables.push(nominal("noise_n0", &["p", "q", "r", "s"], &[0.25; 4]));

    CohortSpec {
        n_rows: 2000,
        variables,
        outcomes: vec![OutcomeModel {
            name: "y".into(),
            intercept: -1.05,
            terms: vec![
                OutcomeTerm::new("sig_cont", 1.2),
                term("sig_bin", 1.4, 0.4),
                term("sig_ord", 0.9, 0.85),
            ],
            interactions: vec![],
        }],
        seed: 0,
    }
}
