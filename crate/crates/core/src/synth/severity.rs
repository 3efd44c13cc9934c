use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classes::{DefectClass, Severity};

/// Label distribution per class, as `(severity, probability)` pairs.
pub fn severity_distribution(class: DefectClass) -> &'static [(Severity, f64)] {
    use DefectClass::*;
    match class {
        NearFullWafer => &[(Severity::Critical, 1.0)],
        NoDefect => &[(Severity::None, 1.0)],
        Scratch | EdgeCrack => &[(Severity::Major, 0.65), (Severity::Minor, 0.35)],
        CenterCluster | RingPattern => &[(Severity::Major, 0.80), (Severity::Minor, 0.20)],
        ParticleContamination | LocalCluster => &[(Severity::Major, 0.40), (Severity::Minor, 0.60)],
        RandomDefects => &[(Severity::Minor, 0.85), (Severity::Major, 0.15)],
    }
}

/// Draw a dataset severity label for a sample.
pub fn sample_severity(class: DefectClass, seed: u64) -> Severity {
    let dist = severity_distribution(class);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e7e717900);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(sev, p) in dist {
        acc += p;
        if u < acc {
            return sev;
        }
    }
    dist[dist.len() - 1].0
}
