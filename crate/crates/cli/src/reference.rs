//! Published wall-clock and communication figures, printed beside local
//! measurements for orientation only. They come from LAN deployments on
//! separate machines and are not expected to be matched here.

use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Published {
    pub network: &'static str,
    /// Seconds and MB for one inference query, semi-honest.
    pub infer_semi: (f64, f64),
    /// Seconds and MB for one inference query, malicious.
    pub infer_mal: (f64, f64),
    /// Hours to train, semi-honest and malicious.
    pub train_hours: Option<(f64, f64)>,
}

pub const PUBLISHED: &[Published] = &[
    Published {
        network: "network-a",
        infer_semi: (0.011, 0.012),
        infer_mal: (0.021, 0.31),
        train_hours: Some((0.17, 0.56)),
    },
    Published {
        network: "network-b",
        infer_semi: (0.009, 0.049),
        infer_mal: (0.022, 0.52),
        train_hours: Some((0.42, 1.17)),
    },
    Published {
        network: "network-c",
        infer_semi: (0.042, 0.51),
        infer_mal: (0.089, 3.37),
        train_hours: Some((3.71, 11.9)),
    },
    Published {
        network: "lenet",
        infer_semi: (0.047, 0.74),
        infer_mal: (0.12, 5.69),
        train_hours: None,
    },
];

pub fn lines() -> Vec<String> {
    let mut out = vec!["published LAN reference (not an acceptance target):".to_string()];
    for p in PUBLISHED {
        let mut s = format!(
            "  {:<10} inference semi {:.3}s {:.3} MB, malicious {:.3}s {:.2} MB",
            p.network, p.infer_semi.0, p.infer_semi.1, p.infer_mal.0, p.infer_mal.1
        );
        if let Some((a, b)) = p.train_hours {
            s += &format!(", training {a} h / {b} h");
        }
        out.push(s);
    }
    out
}
