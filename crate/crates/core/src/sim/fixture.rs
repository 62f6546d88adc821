//! Generated load scenarios.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detection::Light;
use crate::fusion::FusionMode;

use super::scenario::{DetectorOverride, EventKind, Scenario, ScenarioEvent, SpaceSpec};

/// `spaces` spaces over `duration_ms` with parking sessions, passers-by,
/// night periods, bumps, a few tilted barriers and some lossy links.
pub fn load_fixture(seed: u64, spaces: usize, duration_ms: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(spaces);
    let mut events: Vec<(u64, usize, ScenarioEvent)> = Vec::new();
    for i in 0..spaces {
        let id = format!("s{:03}", i + 1);
        specs.push(SpaceSpec {
            id: id.clone(),
            terminal_id: format!("t{:03}", i + 1),
            roi: [100.0, 100.0, 150.0, 150.0],
            mode: FusionMode::Full,
        });
        let mut push = |t: u64, kind: EventKind| {
            if t < duration_ms {
                let n = events.len();
                events.push((t, n, ScenarioEvent { t, space_id: id.clone(), kind }));
            }
        };
        if rng.random_bool(0.3) {
            push(rng.random_range(0..duration_ms / 2), EventKind::Light(Light::Night));
        }
        if rng.random_bool(0.2) {
            push(rng.random_range(0..duration_ms), EventKind::LinkLoss { p: 0.05 });
        }
        if rng.random_bool(0.1) {
            push(rng.random_range(0..duration_ms), EventKind::Tilt { deg: 26.0 });
        }
        let mut t = rng.random_range(0..600_000u64);
        let mut parked = false;
        while t < duration_ms {
            if parked {
                push(t, EventKind::VehicleDepart);
                t += rng.random_range(120_000..1_200_000);
            } else {
                let bumped = rng.random_bool(0.1);
                if bumped {
                    push(t, EventKind::Occlusion(true));
                }
                push(t, EventKind::VehicleArrive);
                if bumped {
                    push(t + 1_500, EventKind::Impact { g: 2.0 });
                    push(t + 60_000, EventKind::Occlusion(false));
                }
                t += rng.random_range(300_000..2_400_000);
            }
            parked = !parked;
        }
        let mut p = rng.random_range(0..900_000u64);
        while p < duration_ms {
            push(p, EventKind::Pedestrian);
            p += rng.random_range(300_000..1_200_000);
        }
    }
    events.sort_by_key(|(t, n, _)| (*t, *n));
    Scenario {
        seed,
        duration_ms,
        detector: DetectorOverride::default(),
        spaces: specs,
        events: events.into_iter().map(|(_, _, e)| e).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_valid_and_reproducible() {
        let a = load_fixture(9, 5, 3_600_000);
        let b = load_fixture(9, 5, 3_600_000);
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].t <= w[1].t));
        let reparsed: Scenario = a.to_string().parse().unwrap();
        assert_eq!(reparsed, a);
        assert_ne!(load_fixture(10, 5, 3_600_000), a);
    }
}
