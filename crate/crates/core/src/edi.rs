//! Analytic Event Double Integral and EDI deblurring.
//!
//! E(f, T) = (1/T) integral over the exposure of exp(Theta * integral_f^t e(s) ds) dt,
//! evaluated by midpoint quadrature with the inner integral computed exactly
//! from the sorted event list. The latent frame follows as I(f) = B / E(f, T).

use crate::error::{Error, Result};
use crate::event::{EventStream, ExposureWindow};
use crate::grid::{Image, ScalarMap};

/// Default quadrature resolution; matches the blur-synthesis default so the
/// forward and inverse models share a grid.
pub const DEFAULT_SUBSTEPS: usize = 64;

/// Reconstructed frames are clamped to this upper bound. EDI can
/// legitimately overshoot the blur range transiently; report-time writers
/// re-clamp to [0, 1].
pub const CLAMP_MAX: f64 = 2.0;

/// A blurry frame with the events covering its exposure.
#[derive(Debug, Clone)]
pub struct BlurObservation {
    pub blur: Image,
    pub exposure: ExposureWindow,
    pub events: EventStream,
}

impl BlurObservation {
    pub fn new(blur: Image, exposure: ExposureWindow, events: EventStream) -> Result<Self> {
        if events.t_start() > exposure.t_open() || events.t_end() < exposure.t_close() {
            return Err(Error::Range(format!(
                "event stream [{}, {}] does not span the exposure [{}, {}]",
                events.t_start(),
                events.t_end(),
                exposure.t_open(),
                exposure.t_close()
            )));
        }
        if blur.width() != events.width() || blur.height() != events.height() {
            return Err(Error::Dimension(format!(
                "blur {}x{} vs sensor {}x{}",
                blur.width(),
                blur.height(),
                events.width(),
                events.height()
            )));
        }
        Ok(BlurObservation {
            blur,
            exposure,
            events,
        })
    }
}

/// Event double integral E(f, T) by midpoint quadrature over `substeps`
/// nodes; strictly positive everywhere.
pub fn double_integral(
    events: &EventStream,
    f: i64,
    exposure: &ExposureWindow,
    theta: f64,
    substeps: usize,
) -> Result<ScalarMap> {
    exposure.check_contains(f).map_err(|_| {
        Error::Range(format!(
            "reference time {} outside exposure [{}, {}]",
            f,
            exposure.t_open(),
            exposure.t_close()
        ))
    })?;
    if substeps < 2 {
        return Err(Error::Param(format!(
            "double integral needs at least 2 substeps, got {}",
            substeps
        )));
    }
    if !(theta > 0.0) {
        return Err(Error::Param(format!(
            "contrast threshold must be positive, got {}",
            theta
        )));
    }

    let (w, h) = (events.width(), events.height());
    let n_px = w * h;
    let nodes = exposure.midpoint_nodes(substeps);

    // Bucket events per pixel, preserving time order.
    let mut counts = vec![0usize; n_px];
    for e in events.events() {
        counts[e.y as usize * w + e.x as usize] += 1;
    }
    let mut offsets = vec![0usize; n_px + 1];
    for i in 0..n_px {
        offsets[i + 1] = offsets[i] + counts[i];
    }
    let mut bucket_t = vec![0i64; events.len()];
    let mut bucket_p = vec![0i8; events.len()];
    let mut cursor = offsets.clone();
    for e in events.events() {
        let px = e.y as usize * w + e.x as usize;
        bucket_t[cursor[px]] = e.t;
        bucket_p[cursor[px]] = e.p;
        cursor[px] += 1;
    }

    let inv = 1.0 / substeps as f64;
    let mut out = ScalarMap::zeros(w, h);
    for px in 0..n_px {
        let ts = &bucket_t[offsets[px]..offsets[px + 1]];
        let ps = &bucket_p[offsets[px]..offsets[px + 1]];
        if ts.is_empty() {
            out.values_mut()[px] = 1.0;
            continue;
        }
        // Signed prefix at f: sum of polarities with t < f.
        let at_f = ts.partition_point(|&t| t < f);
        let cum_f: i64 = ps[..at_f].iter().map(|&p| p as i64).sum();
        // Walk the sorted nodes with a running prefix.
        let mut k = 0usize;
        let mut run: i64 = 0;
        let mut acc = 0.0;
        for &tm in &nodes {
            while k < ts.len() && ts[k] < tm {
                run += ps[k] as i64;
                k += 1;
            }
            acc += (theta * (run - cum_f) as f64).exp();
        }
        out.values_mut()[px] = acc * inv;
    }
    Ok(out)
}

/// EDI deblurring: I(f) = B / E(f, T), clamped to [0, CLAMP_MAX]. Division is
/// safe because E > 0 by construction.
pub fn edi_deblur(obs: &BlurObservation, f: i64, theta: f64) -> Result<Image> {
    edi_deblur_with_substeps(obs, f, theta, DEFAULT_SUBSTEPS)
}

pub fn edi_deblur_with_substeps(
    obs: &BlurObservation,
    f: i64,
    theta: f64,
    substeps: usize,
) -> Result<Image> {
    let e = double_integral(&obs.events, f, &obs.exposure, theta, substeps)?;
    let mut out = obs.blur.clone();
    for (b, ev) in out.values_mut().iter_mut().zip(e.values()) {
        *b = (*b / ev).clamp(0.0, CLAMP_MAX);
    }
    Ok(out)
}

/// Result of the contrast-threshold sweep.
#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub scores: Vec<f64>,
    /// Set when the best score is not unique; the first maximizer is kept.
    pub tie: bool,
}

/// Fraction of the exposure used as the "evidence" window around each
/// reference time in the calibration score.
const SWEEP_WINDOW_FRACTION: i64 = 10;

fn log_gradient_magnitude(img: &Image, floor: f64) -> ScalarMap {
    let (w, h) = (img.width(), img.height());
    let l = img.map(|v| (v + floor).ln());
    ScalarMap::from_fn(w, h, |x, y| {
        if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
            return 0.0;
        }
        let gx = (l.at(x + 1, y) - l.at(x - 1, y)) / 2.0;
        let gy = (l.at(x, y + 1) - l.at(x, y - 1)) / 2.0;
        (gx * gx + gy * gy).sqrt()
    })
}

/// Mid-rank transform (ties averaged).
fn rank_transform(g: &ScalarMap) -> Vec<f64> {
    let n = g.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| g.values()[i].partial_cmp(&g.values()[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && g.values()[idx[j + 1]] == g.values()[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va < 1e-24 || vb < 1e-24 {
        return 0.0;
    }
    num / (va.sqrt() * vb.sqrt())
}

/// Event-alignment calibration score for one candidate threshold.
///
/// A correct threshold concentrates the reconstruction's log-gradient
/// structure on pixels with event evidence near the reference time; a wrong
/// one leaves residual blur or ghost edges on pixels whose events fired
/// elsewhere in the exposure. The score is the rank correlation with the
/// near-window evidence minus the rank correlation with the rest-of-exposure
/// evidence, averaged over three reference times. Rank correlation makes the
/// score invariant to the contrast amplification a larger threshold causes.
fn sweep_score(obs: &BlurObservation, theta: f64, floor: f64) -> Result<f64> {
    let (t0, t1) = (obs.exposure.t_open(), obs.exposure.t_close());
    let span = obs.exposure.duration();
    let half = span / (2 * SWEEP_WINDOW_FRACTION);
    let refs = [t0 + span / 4, t0 + span / 2, t0 + 3 * span / 4];
    let mut score = 0.0;
    for &f in &refs {
        let img = edi_deblur(obs, f, theta)?;
        let grad = rank_transform(&log_gradient_magnitude(&img, floor));
        let (lo, hi) = ((f - half).max(t0), (f + half).min(t1));
        let near = accumulate(&obs.events, lo, hi)?.map(f64::abs);
        let rest = accumulate(&obs.events, t0, lo)?
            .map(f64::abs)
            .add(&accumulate(&obs.events, hi, t1)?.map(f64::abs));
        let near_var = near.values().iter().any(|&v| v != 0.0);
        let rest_var = rest.values().iter().any(|&v| v != 0.0);
        if !near_var && !rest_var {
            continue;
        }
        score += (pearson(&grad, &rank_transform(&near))
            - pearson(&grad, &rank_transform(&rest)))
            / refs.len() as f64;
    }
    Ok(score)
}

/// Sweeps candidate thresholds and returns the one maximizing the
/// event-alignment score of the reconstructions, plus all scores.
pub fn estimate_theta(obs: &BlurObservation, candidates: &[f64]) -> Result<ThetaEstimate> {
    estimate_theta_with_floor(obs, candidates, 1e-3)
}

pub fn estimate_theta_with_floor(
    obs: &BlurObservation,
    candidates: &[f64],
    intensity_floor: f64,
) -> Result<ThetaEstimate> {
    if candidates.is_empty() {
        return Err(Error::Param("empty candidate list for theta sweep".into()));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &theta in candidates {
        scores.push(sweep_score(obs, theta, intensity_floor)?);
    }
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    let tie = scores.iter().filter(|&&s| s == scores[best]).count() > 1;
    Ok(ThetaEstimate {
        theta: candidates[best],
        scores,
        tie,
    })
}
