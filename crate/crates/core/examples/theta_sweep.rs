use evlab_core::edi::{edi_deblur, BlurObservation};
use evlab_core::event::{accumulate, ExposureWindow};
use evlab_core::geometry::{se3_exp, BezierTrajectory, SE3Pose, TangentVector};
use evlab_core::grid::Grid;
use evlab_core::toyscene::{synth_blur, synth_events, PlanarScene, SynthConfig};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Background ramp + soft-edged discs and bars: crisp but band-limited.
fn procedural_shapes(width: usize, height: usize, seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 9;
    let discs: Vec<(f64, f64, f64, f64, f64)> = (0..n).map(|_| (
        rng.gen_range(0.12 * width as f64..0.88 * width as f64),
        rng.gen_range(0.12 * height as f64..0.88 * height as f64),
        rng.gen_range(width as f64 / 14.0..width as f64 / 5.0),
        rng.gen_range(-0.55..0.55),
        rng.gen_range(1.0..1.8),
    )).collect();
    Grid::from_fn(width, height, |x, y| {
        let mut v = 0.35 + 0.3 * (x as f64 / width as f64) + 0.12 * (y as f64 / height as f64);
        for &(cx, cy, r, amp, soft) in &discs {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            v += amp * 0.5 * (1.0 - ((d - r) / soft).tanh());
        }
        v.clamp(0.12, 0.95)
    })
}

fn grad_mag(img: &Grid) -> Grid {
    let (w, h) = (img.width(), img.height());
    Grid::from_fn(w, h, |x, y| {
        if x == 0 || y == 0 || x == w - 1 || y == h - 1 { return 0.0; }
        let gx = (img.at(x + 1, y) - img.at(x - 1, y)) / 2.0;
        let gy = (img.at(x, y + 1) - img.at(x, y - 1)) / 2.0;
        (gx * gx + gy * gy).sqrt()
    })
}

fn rank_transform(g: &Grid) -> Grid {
    let n = g.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| g.values()[i].partial_cmp(&g.values()[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && g.values()[idx[j + 1]] == g.values()[idx[i]] { j += 1; }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j { ranks[idx[k]] = r; }
        i = j + 1;
    }
    Grid::from_vec(g.width(), g.height(), ranks).unwrap()
}

fn corr(a: &Grid, b: &Grid) -> f64 {
    let (ma, mb) = (a.mean(), b.mean());
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    num / (va.sqrt() * vb.sqrt() + 1e-30)
}

fn run(seed: u64, px: f64, theta: f64) {
    let tex = procedural_shapes(64, 64, seed);
    let scene = PlanarScene::new(tex, Vector3::new(0.0, 0.0, 1.0), 1.0, (70.0, 70.0, 31.5, 31.5), 1e-3, 64, 64).unwrap();
    let cps: Vec<SE3Pose> = (0..9).map(|j| {
        let s = j as f64 / 8.0;
        let along = s + 0.15 * s * (1.0 - s);
        se3_exp(&TangentVector::new(Vector3::zeros(), Vector3::new(px/70.0*along, 0.2*px/70.0*s, 0.0)))
    }).collect();
    let t_total = 120_000_000i64;
    let exposure = ExposureWindow::new(0, t_total).unwrap();
    let traj = BezierTrajectory::new(cps.try_into().unwrap(), exposure);
    let cfg = SynthConfig { theta_pos: theta, theta_neg: theta, substep_count: 1024, ..SynthConfig::default() };
    let events = synth_events(&scene, &traj, &cfg).unwrap();
    let blur = synth_blur(&scene, &traj, 64).unwrap();
    let obs = BlurObservation::new(blur, exposure, events.clone()).unwrap();
    println!("seed {} motion {} px theta {} ({} events):", seed, px, theta, events.len());
    let fs = [t_total / 4, t_total / 2, 3 * t_total / 4];
    for m in [0.5, 0.7, 0.9, 1.0, 1.1, 1.3, 1.5, 2.0] {
        let mut s10 = 0.0; let mut s20 = 0.0;
        let mut r10 = 0.0; let mut r20 = 0.0;
        for &f in &fs {
            let img = edi_deblur(&obs, f, theta * m).unwrap();
            let glog = grad_mag(&img.map(|v| (v + 1e-3).ln()));
            let gc = grad_mag(&img.clamp_values(0.0, 1.0));
            for ((acc, acc2), frac) in [((&mut s10, &mut r10), 10i64), ((&mut s20, &mut r20), 20)] {
                let half = t_total / (2 * frac);
                let (lo, hi) = ((f - half).max(0), (f + half).min(t_total));
                let short = accumulate(&events, lo, hi).unwrap().map(f64::abs);
                let before = accumulate(&events, 0, lo).unwrap().map(f64::abs);
                let after = accumulate(&events, hi, t_total).unwrap().map(f64::abs);
                let rest = before.add(&after);
                let _ = &glog;
                *acc += (corr(&gc, &short) - corr(&gc, &rest)) / 3.0;
                let (rs, rr, rg) = (rank_transform(&short), rank_transform(&rest), rank_transform(&glog));
                *acc2 += (corr(&rg, &rs) - corr(&rg, &rr)) / 3.0;
            }
        }
        println!("  x{:4}: clampT/10 {:9.6}  clampT/20 {:9.6}  rankT/10 {:9.6}  rankT/20 {:9.6}", m, s10, s20, r10, r20);
    }
}

fn main() {
    run(3, 8.0, 0.08);
    run(14, 8.0, 0.08);
    run(3, 8.0, 0.15);
}
