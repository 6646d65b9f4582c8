use std::sync::Arc;

use mexflow::flow::{
    estimate_flow, horn_schunck_observed, lucas_kanade_with_mask, structure_tensor_min_eigenvalue, tvl1_observed,
    FlowConfig, FlowField, FlowMethod, FlowRegistry,
};
use mexflow::imaging::{GrayImage, Plane, Texture};

fn pair(seed: u64, size: usize, dx: f64, dy: f64) -> (GrayImage, GrayImage) {
    let t = Texture::random(size, seed);
    let a = t.render_displaced(size, size, |_, _| (0.0, 0.0));
    let b = t.render_displaced(size, size, |_, _| (dx, dy));
    (
        GrayImage::from_plane_clamped(&a).unwrap(),
        GrayImage::from_plane_clamped(&b).unwrap(),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn identical_frames_give_zero_flow() {
    let (a, _) = pair(3, 64, 0.0, 0.0);
    for m in FlowMethod::BUILTIN {
        let f = estimate_flow(&a, &a, &FlowConfig::with_method(m.clone())).unwrap();
        assert!(f.max_magnitude() < 1e-3, "{m}: {}", f.max_magnitude());
    }
}

#[test]
fn translated_texture_recovered_by_all_methods() {
    let (a, b) = pair(11, 64, 1.0, 0.5);
    for m in FlowMethod::BUILTIN {
        let (f, mask) = if m == FlowMethod::LucasKanade {
            lucas_kanade_with_mask(a.as_plane(), b.as_plane(), &FlowConfig::with_method(m.clone())).unwrap()
        } else {
            let f = estimate_flow(&a, &b, &FlowConfig::with_method(m.clone())).unwrap();
            let n = f.p.data.len();
            (f, vec![true; n])
        };
        let mp = median(
            f.p.data
                .iter()
                .zip(&mask)
                .filter(|(_, &k)| k)
                .map(|(v, _)| *v)
                .collect(),
        );
        let mq = median(
            f.q.data
                .iter()
                .zip(&mask)
                .filter(|(_, &k)| k)
                .map(|(v, _)| *v)
                .collect(),
        );
        assert!((mp - 1.0).hypot(mq - 0.5) < 0.2, "{m}: median ({mp}, {mq})");
    }
}

#[test]
fn lk_textureless_pair_is_fully_flagged() {
    let a = GrayImage::constant(32, 32, 0.4).unwrap();
    let b = GrayImage::constant(32, 32, 0.6).unwrap();
    let (f, mask) = lucas_kanade_with_mask(
        a.as_plane(),
        b.as_plane(),
        &FlowConfig::with_method(FlowMethod::LucasKanade),
    )
    .unwrap();
    assert!(mask.iter().all(|m| !m));
    assert_eq!(f.max_magnitude(), 0.0);
}

#[test]
fn lk_unflagged_pixels_meet_eigenvalue_floor() {
    let (a, b) = pair(5, 64, 0.7, -0.4);
    let cfg = FlowConfig::with_method(FlowMethod::LucasKanade);
    let (_, mask) = lucas_kanade_with_mask(a.as_plane(), b.as_plane(), &cfg).unwrap();
    let eig = structure_tensor_min_eigenvalue(a.as_plane(), cfg.lucas_kanade.window_radius);
    assert!(mask.iter().any(|m| *m));
    for (e, m) in eig.data.iter().zip(&mask) {
        if *m {
            assert!(*e >= cfg.lucas_kanade.min_eigenvalue);
        }
    }
}

#[test]
fn hs_energy_never_increases() {
    let (a, b) = pair(7, 64, 1.2, -0.8);
    let mut cfg = FlowConfig::with_method(FlowMethod::HornSchunck);
    cfg.horn_schunck.iterations = 60;
    let mut last: Option<(usize, f64)> = None;
    let mut checked = 0;
    let mut obs = |level: usize, _it: usize, e: f64| {
        if let Some((l, prev)) = last {
            if l == level {
                assert!(e <= prev * (1.0 + 1e-12) + 1e-9, "level {level}: {prev} -> {e}");
                checked += 1;
            }
        }
        last = Some((level, e));
    };
    horn_schunck_observed(a.as_plane(), b.as_plane(), &cfg, Some(&mut obs)).unwrap();
    assert_eq!(checked, 3 * 60);
}

#[test]
fn tvl1_warps_do_not_increase_error() {
    let cfg = FlowConfig::with_method(FlowMethod::Tvl1);
    for (seed, dx, dy) in [(1u64, 1.5, -0.5), (2, -1.8, 0.9), (3, 0.4, 1.9)] {
        let (a, b) = pair(seed, 64, dx, dy);
        let truth = FlowField::constant(64, 64, dx, dy);
        // pixels whose source leaves the frame have no valid correspondence
        let band = (dx.abs().max(dy.abs())).ceil() as usize + 2;
        let mut errs = Vec::new();
        let mut obs = |level: usize, _w: usize, f: &FlowField| {
            if level == 0 {
                let e = f.endpoint_error(&truth).unwrap();
                let mut sum = 0.0;
                let mut n = 0.0;
                for y in band..64 - band {
                    for x in band..64 - band {
                        sum += e.get(x, y);
                        n += 1.0;
                    }
                }
                errs.push(sum / n);
            }
        };
        tvl1_observed(a.as_plane(), b.as_plane(), &cfg, Some(&mut obs)).unwrap();
        assert_eq!(errs.len(), cfg.tvl1.warps);
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "seed {seed}: {errs:?}");
        }
    }
}

#[test]
fn interior_flow_is_shift_equivariant() {
    let size = 64;
    let t = Texture::random(96, 21);
    let render = |ox: usize, oy: usize, d: (f64, f64)| {
        let p = Plane::from_fn(size, size, |x, y| t.eval((x + ox) as f64 - d.0, (y + oy) as f64 - d.1));
        GrayImage::from_plane_clamped(&p).unwrap()
    };
    let d = (0.8, -0.6);
    for m in FlowMethod::BUILTIN {
        let cfg = FlowConfig::with_method(m.clone());
        let base = estimate_flow(&render(8, 8, (0.0, 0.0)), &render(8, 8, d), &cfg).unwrap();
        for (sx, sy) in [(4usize, 4usize), (8, 0), (3, 5)] {
            let shifted = estimate_flow(&render(8 + sx, 8 + sy, (0.0, 0.0)), &render(8 + sx, 8 + sy, d), &cfg).unwrap();
            let band = 16;
            let mut worst: f64 = 0.0;
            for y in band..size - band {
                for x in band..size - band {
                    let (bp, bq) = (base.p.get(x + sx, y + sy), base.q.get(x + sx, y + sy));
                    let (sp, sq) = (shifted.p.get(x, y), shifted.q.get(x, y));
                    worst = worst.max((bp - sp).hypot(bq - sq));
                }
            }
            assert!(worst < 0.05, "{m} shift ({sx},{sy}): {worst}");
        }
    }
}

#[test]
fn extent_mismatch_and_bad_pyramid_rejected() {
    let a = GrayImage::constant(32, 32, 0.5).unwrap();
    let b = GrayImage::constant(32, 31, 0.5).unwrap();
    assert!(estimate_flow(&a, &b, &FlowConfig::default()).is_err());
    let small = GrayImage::constant(20, 20, 0.5).unwrap();
    assert!(estimate_flow(&small, &small, &FlowConfig::default()).is_err());
}

#[test]
fn registry_accepts_external_and_protects_builtins() {
    let mut reg = FlowRegistry::new();
    let zero = Arc::new(|a: &GrayImage, _: &GrayImage, _: &FlowConfig| Ok(FlowField::zeros(a.width(), a.height())));
    reg.register("farneback", zero.clone()).unwrap();
    assert!(reg.register("farneback", zero.clone()).is_err());
    assert!(reg.register("tvl1", zero).is_err());
    assert_eq!(reg.names(), ["horn_schunck", "lucas_kanade", "tvl1", "farneback"]);
    let (a, b) = pair(2, 32, 1.0, 0.0);
    let cfg: FlowConfig = serde_json::from_str(r#"{"method":"farneback"}"#).unwrap();
    let f = reg.estimate(&a, &b, &cfg).unwrap();
    assert_eq!(f.max_magnitude(), 0.0);
    assert!(estimate_flow(&a, &b, &cfg).is_err());
}
