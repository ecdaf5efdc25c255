//! Built-in example scenes and their designated command suites.

pub const SCENES: &[(&str, &str)] = &[
    ("gaussian", include_str!("../gallery/gaussian.json")),
    ("bernoulli", include_str!("../gallery/bernoulli.json")),
    (
        "degenerate-reparam",
        include_str!("../gallery/degenerate-reparam.json"),
    ),
    (
        "degenerate-line",
        include_str!("../gallery/degenerate-line.json"),
    ),
    ("cusp", include_str!("../gallery/cusp.json")),
    (
        "quartic-potential",
        include_str!("../gallery/quartic-potential.json"),
    ),
    (
        "cuspidal-edge",
        include_str!("../gallery/cuspidal-edge.json"),
    ),
];

pub fn scene_text(name: &str) -> Option<&'static str> {
    SCENES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// The commands each gallery scene is expected to pass, in a fixed order.
pub struct SuiteEntry {
    pub command: &'static str,
    pub object: &'static str,
}

pub fn suite_for(scene: &str) -> Vec<SuiteEntry> {
    let mk = |command, object| SuiteEntry { command, object };
    match scene {
        "gaussian" => vec![
            mk("fisher", "gaussian"),
            mk("alpha-check", "gaussian"),
            mk("codazzi-check", "gaussian"),
            mk("contrast-extract", "kl"),
            mk("quasi-codazzi-check", "exp_structure"),
            mk("iso-check", "to_canonical"),
        ],
        "bernoulli" => vec![
            mk("fisher", "bernoulli"),
            mk("alpha-check", "bernoulli"),
            mk("contrast-extract", "kl"),
        ],
        "degenerate-reparam" => vec![mk("fisher", "overparametrized")],
        "degenerate-line" => vec![mk("blowup-probe", "line"), mk("blowup-probe", "plane")],
        "cusp" => vec![
            mk("quasi-codazzi-check", "cusp"),
            mk("contrast-build", "relations"),
            mk("reconstruct", "reconstruction"),
        ],
        "quartic-potential" => vec![
            mk("quasi-codazzi-check", "quartic"),
            mk("reconstruct", "reconstruction"),
        ],
        "cuspidal-edge" => vec![mk("front", "edge")],
        _ => vec![],
    }
}
