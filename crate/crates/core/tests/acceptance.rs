//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-8 and 10 are exact or statistical properties and fail the run
//! when violated. Criterion 9 is a scaled-down training experiment; its
//! outcome is reported with the measured numbers but does not change the
//! exit status (see README).

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};

use v2x_core::channel::{apply_channel, ChannelModel, ChannelResponse, RngStream};
use v2x_core::dataset::{generate_dataset, load_split, DatasetManifest, Split};
use v2x_core::estimators::{
    cdp_estimate, dpa_estimate, frequency_average, ls_from_frame, sta_estimate, ta_process, trfi_estimate,
    EstimateGrid, EstimatorId, StaConfig, TaConfig,
};
use v2x_core::eval::{records_to_csv, run_sweep, EvalRecord, SweepPlan, SweepSetup};
use v2x_core::grid::ComplexGrid;
use v2x_core::link::simulate_frame;
use v2x_core::phy::{Constellation, FrameSpec};
use v2x_core::pipeline::{dpa_from_refined, identity_model, tcn_dpa_estimate, tcn_dpa_ta_estimate, TcnPipeline};
use v2x_core::tcn::{train, write_checkpoint, Signal, TcnConfig, TcnModel, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn setup() -> (FrameSpec, Constellation, ChannelModel) {
    (FrameSpec::ieee80211p(), Constellation::qam16(), ChannelModel::vtv_sdww_illustrative())
}

fn c64(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

// 1 -------------------------------------------------------------------------

fn estimator_exactness() -> Outcome {
    let start = Instant::now();
    let (spec, c, mut model) = setup();
    model.doppler_hz = 0.0;
    let sta = StaConfig { alpha: 1.0, beta: 0 };
    let mut worst: f64 = 0.0;
    for f in 0..20 {
        let frame = simulate_frame(&spec, &c, &model, f64::INFINITY, RngStream::new(101, f)).unwrap();
        let truth = frame.data_channel(&spec);
        let h_ls = ls_from_frame(&frame.rx, &spec).unwrap();
        let estimates = [
            EstimateGrid::constant(&h_ls, spec.num_data_symbols, EstimatorId::Ls),
            dpa_estimate(&frame.rx, &h_ls, &spec, &c).unwrap(),
            sta_estimate(&frame.rx, &h_ls, sta, &spec, &c).unwrap(),
            cdp_estimate(&frame.rx, &h_ls, &spec, &c).unwrap(),
            trfi_estimate(&frame.rx, &h_ls, &spec, &c).unwrap(),
        ];
        for est in &estimates {
            for (e, t) in est.grid.values().iter().zip(truth.values()) {
                worst = worst.max((e - t).norm() / t.norm());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.2e} over LS/DPA/STA/CDP/TRFI x 20 frames, {elapsed:.2?}"),
    )
}

// 2 -------------------------------------------------------------------------

fn reduction_identities() -> Outcome {
    let (spec, c, model) = setup();
    let identity = identity_model(100);
    let random = TcnModel::<f32>::from_seed(TcnConfig::default(), 5).unwrap();
    let sta = StaConfig { alpha: 1.0, beta: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut failures = [0usize; 5];
    for f in 0..100 {
        let snr = rng.random_range(0.0..45.0);
        let frame = simulate_frame(&spec, &c, &model, snr, RngStream::new(102, f)).unwrap();
        let h_ls = ls_from_frame(&frame.rx, &spec).unwrap();
        let dpa = dpa_estimate(&frame.rx, &h_ls, &spec, &c).unwrap();
        if sta_estimate(&frame.rx, &h_ls, sta, &spec, &c).unwrap().grid != dpa.grid {
            failures[0] += 1;
        }
        if ta_process(&dpa, TaConfig { alpha: 1.0 }).unwrap().grid != dpa.grid {
            failures[1] += 1;
        }
        if dpa_from_refined(&frame.rx, &dpa.grid, &spec, &c).unwrap().grid != dpa.grid {
            failures[2] += 1;
        }
        if tcn_dpa_estimate(&frame.rx, &h_ls, &identity, &spec, &c).unwrap().grid != dpa.grid {
            failures[3] += 1;
        }
        let ta = TaConfig::default();
        let composed = ta_process(&tcn_dpa_estimate(&frame.rx, &h_ls, &random, &spec, &c).unwrap(), ta).unwrap();
        if tcn_dpa_ta_estimate(&frame.rx, &h_ls, &random, &spec, &c, ta).unwrap() != composed {
            failures[4] += 1;
        }
    }
    outcome(
        failures.iter().all(|n| *n == 0),
        format!(
            "mismatching frames of 100: STA(0,1)~DPA {}, TA(1)~id {}, refined=DPA {}, identity net {}, TA o TCN-DPA {}",
            failures[0], failures[1], failures[2], failures[3], failures[4]
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn oracle_equivalence() -> Outcome {
    let c = Constellation::qam16();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut slicer_mismatch = 0;
    for _ in 0..10_000 {
        let z = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let brute = (0..c.order())
            .min_by(|&a, &b| (z - c.point(a)).norm_sqr().total_cmp(&(z - c.point(b)).norm_sqr()))
            .unwrap();
        if c.nearest_label(z).unwrap() != brute {
            slicer_mismatch += 1;
        }
    }

    // Frequency averaging: interior points see the full window, edge windows
    // are truncated and renormalized.
    let h: Vec<Complex64> = (1..=5).map(|k| Complex64::new(k as f64, -(k as f64) * 0.5)).collect();
    let expect_b1 = [1.5, 2.0, 3.0, 4.0, 4.5];
    let expect_b2 = [2.0, 2.5, 3.0, 3.5, 4.0];
    let mut freq_err: f64 = 0.0;
    for (beta, expect) in [(1, expect_b1), (2, expect_b2)] {
        for (got, e) in frequency_average(&h, beta).iter().zip(expect) {
            freq_err = freq_err.max((got - Complex64::new(e, -e * 0.5)).norm());
        }
    }

    // Temporal averaging against its closed form
    // out_i = (1-w)^i x_0 + sum_{k=1..i} w (1-w)^(i-k) x_k.
    let mut ta_err: f64 = 0.0;
    for alpha in [2.0, 4.0, 1.5] {
        let w = 1.0 / alpha;
        let x = ComplexGrid::from_fn(3, 12, |_, _| c64(&mut rng));
        let est = EstimateGrid {
            grid: x.clone(),
            estimator: EstimatorId::Dpa,
        };
        let out = ta_process(&est, TaConfig { alpha }).unwrap();
        for r in 0..3 {
            for i in 0..12 {
                let mut closed = x[(r, 0)] * (1.0 - w).powi(i as i32);
                for k in 1..=i {
                    closed += x[(r, k)] * w * (1.0 - w).powi((i - k) as i32);
                }
                ta_err = ta_err.max((out.grid[(r, i)] - closed).norm());
            }
        }
    }
    outcome(
        slicer_mismatch == 0 && freq_err < 1e-12 && ta_err < 1e-12,
        format!("slicer mismatches {slicer_mismatch}/10000, freq-avg err {freq_err:.1e}, TA err {ta_err:.1e}"),
    )
}

// 4 -------------------------------------------------------------------------

fn mse(y: &Signal<f64>, t: &Signal<f64>) -> (f64, Signal<f64>) {
    let n = y.data().len() as f64;
    let mut grad = y.clone();
    let mut loss = 0.0;
    for ((g, a), b) in grad.data_mut().iter_mut().zip(y.data()).zip(t.data()) {
        loss += (a - b) * (a - b) / n;
        *g = 2.0 * (a - b) / n;
    }
    (loss, grad)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let config = TcnConfig {
        input_channels: 3,
        hidden_channels: 5,
        output_channels: 2,
        kernel_size: 2,
        dilations: vec![1, 2],
        dropout: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut model = TcnModel::<f64>::new(config, &mut rng).unwrap();
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let x = Signal::from_fn(3, 12, |_, _| rng.random_range(-1.0..1.0));
    let t = Signal::from_fn(2, 12, |_, _| rng.random_range(-1.0..1.0));
    let loss = |m: &TcnModel<f64>| mse(&m.forward(&x).unwrap(), &t).0;

    let trace = model.forward_traced(&x, None).unwrap();
    let (_, dy) = mse(&trace.output, &t);
    let mut grad = model.zeros_like();
    model.backward(&trace, &dy, &mut grad);

    // Tensor order: block 0 conv1 (w, b), conv2 (w, b), proj (w, b); block 1
    // conv1, conv2; head. One sample from each, the rest random.
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut picks: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(p, &n)| (p, rng.random_range(0..n))).collect();
    while picks.len() < 30 {
        let p = rng.random_range(0..sizes.len());
        picks.push((p, rng.random_range(0..sizes[p])));
    }
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for &(p, i) in &picks {
        let mut plus = model.clone();
        plus.params_mut()[p][i] += eps;
        let mut minus = model.clone();
        minus.params_mut()[p][i] -= eps;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        let analytic = grad.params()[p][i];
        worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && sizes.len() == 12 && elapsed < Duration::from_secs(30),
        format!(
            "max relative error {worst:.2e} over {} parameters in {} tensors (conv w/b, projection, head), {elapsed:.2?}",
            picks.len(),
            sizes.len()
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn causality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut leaks = 0;
    for trial in 0..50 {
        let config = TcnConfig {
            input_channels: rng.random_range(1..5),
            hidden_channels: rng.random_range(1..6),
            output_channels: rng.random_range(1..4),
            kernel_size: rng.random_range(1..4),
            dilations: (0..rng.random_range(1..4)).map(|_| rng.random_range(1..5)).collect(),
            dropout: 0.0,
        };
        let model = TcnModel::<f32>::from_seed(config.clone(), trial).unwrap();
        let len = 20;
        let x = Signal::from_fn(config.input_channels, len, |_, _| rng.random_range(-1.0f32..1.0));
        let t = rng.random_range(0..len - 1);
        let mut xp = x.clone();
        for ch in 0..config.input_channels {
            for u in t + 1..len {
                xp.set(ch, u, rng.random_range(-5.0f32..5.0));
            }
        }
        let (y, yp) = (model.forward(&x).unwrap(), model.forward(&xp).unwrap());
        for o in 0..config.output_channels {
            if y.channel(o)[..=t] != yp.channel(o)[..=t] {
                leaks += 1;
            }
        }
    }

    let model = TcnModel::<f64>::new(TcnConfig::default(), &mut rng).unwrap();
    let x = Signal::from_fn(100, 52, |_, _| rng.random_range(0.0..1.0));
    let y = model.forward(&x).unwrap();
    let t = 40;
    let reaches = |u: usize| {
        let mut xp = x.clone();
        for ch in 0..100 {
            xp.set(ch, u, xp.get(ch, u) + 3.0);
        }
        let yp = model.forward(&xp).unwrap();
        (0..100).any(|o| yp.get(o, t) != y.get(o, t))
    };
    let field = (0..=t).filter(|&u| reaches(u)).collect::<Vec<_>>();
    let contiguous = field.first() == Some(&(t - 6)) && field.last() == Some(&t) && field.len() == 7;
    outcome(
        leaks == 0 && contiguous,
        format!(
            "future leaks {leaks} over 50 random models; canonical receptive field {} positions [{}..={}]",
            field.len(),
            field.first().unwrap_or(&0),
            field.last().unwrap_or(&0)
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn channel_statistics() -> Outcome {
    let start = Instant::now();
    let (_, _, model) = setup();
    let realizations = 1000;
    let span = 100;
    let max_lag = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let n_taps = model.taps.len();
    let mut acc = vec![vec![Complex64::new(0.0, 0.0); max_lag + 1]; n_taps];
    let pairs = (span - max_lag) * realizations;
    for _ in 0..realizations {
        let real = model.realize(&mut rng);
        let gains: Vec<Vec<Complex64>> = (0..span)
            .map(|i| real.tap_gains(i as f64 * model.symbol_duration_s))
            .collect();
        for l in 0..n_taps {
            for lag in 0..=max_lag {
                for t in 0..span - max_lag {
                    acc[l][lag] += gains[t + lag][l] * gains[t][l].conj();
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (l, tap) in model.taps.iter().enumerate() {
        for lag in 0..=max_lag {
            let r = acc[l][lag] / pairs as f64;
            let dt = lag as f64 * model.symbol_duration_s;
            let expect = tap.power * libm::j0(2.0 * std::f64::consts::PI * model.doppler_hz * dt);
            worst = worst.max((r - expect).norm());
        }
    }

    // Noise calibration: a zero frame through a unit channel at 0 dB.
    let rows = 52;
    let cols = 2000;
    let zero = ComplexGrid::zeros(rows, cols);
    let unit = ChannelResponse {
        grid: ComplexGrid::filled(rows, cols, Complex64::new(1.0, 0.0)),
    };
    let rx = apply_channel(&zero, &unit, 0.0, RngStream::new(106, 0)).unwrap();
    let var = rx.values().iter().map(|z| z.norm_sqr()).sum::<f64>() / (rows * cols) as f64;
    let elapsed = start.elapsed();
    outcome(
        worst <= 0.05 && (var - 1.0).abs() < 0.02 && elapsed < Duration::from_secs(60),
        format!(
            "max |R_l(k) - P_l J0(2 pi f_d k T)| = {worst:.3} (lags 0-10, {} symbols/tap); AWGN variance at 0 dB {var:.4}; {elapsed:.2?}",
            realizations * span
        ),
    )
}

// 7 -------------------------------------------------------------------------

fn ta_contraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let sigma2 = 0.04;
    let h = Complex64::new(0.8, -0.6);
    let symbols = 40;
    let mut sum = 0.0;
    let mut trials = 0;
    for _ in 0..100 {
        let grid = ComplexGrid::from_fn(1000, symbols, |_, _| h + c64(&mut rng) * (sigma2 / 2.0f64).sqrt());
        let est = EstimateGrid {
            grid,
            estimator: EstimatorId::Dpa,
        };
        let out = ta_process(&est, TaConfig { alpha: 2.0 }).unwrap();
        for r in 0..1000 {
            sum += (out.grid[(r, symbols - 1)] - h).norm_sqr();
            trials += 1;
        }
    }
    let var = sum / trials as f64;
    let ratio = var / (sigma2 / 3.0);
    outcome(
        (ratio - 1.0).abs() <= 0.10,
        format!("steady-state variance {var:.5} = {ratio:.3} x sigma^2/3 over {trials} trials"),
    )
}

// 8 -------------------------------------------------------------------------

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Two-sided p-value of a rank correlation via the t approximation.
fn rank_p_value(rho: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    let t = rho * (df / (1.0 - rho * rho).max(1e-300)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

fn dpa_error_trend() -> Outcome {
    let (spec, c, model) = setup();
    let frames = 200;
    let mut per_symbol = vec![0.0; spec.num_data_symbols];
    for f in 0..frames {
        let frame = simulate_frame(&spec, &c, &model, 40.0, RngStream::new(108, f)).unwrap();
        let h_ls = ls_from_frame(&frame.rx, &spec).unwrap();
        let dpa = dpa_estimate(&frame.rx, &h_ls, &spec, &c).unwrap();
        let truth = frame.data_channel(&spec);
        for (j, acc) in per_symbol.iter_mut().enumerate() {
            let err: f64 = spec.data_rows().iter().map(|&r| (dpa.grid[(r, j)] - truth[(r, j)]).norm_sqr()).sum();
            *acc += err / spec.data_rows().len() as f64 / frames as f64;
        }
    }
    let index: Vec<f64> = (0..per_symbol.len()).map(|j| j as f64).collect();
    let rho = spearman(&index, &per_symbol);
    let p = rank_p_value(rho, per_symbol.len());
    let finite = per_symbol.iter().all(|v| v.is_finite() && *v > 0.0);
    outcome(
        finite && rho > 0.0 && p < 0.01,
        format!(
            "Spearman rho {rho:.3}, p = {p:.2e} over {frames} frames; MSE symbol 1 {:.2e} -> symbol 50 {:.2e}",
            per_symbol[0],
            per_symbol[per_symbol.len() - 1]
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn ber(records: &[EvalRecord], id: EstimatorId, snr: f64) -> f64 {
    records
        .iter()
        .find(|r| r.estimator == id && r.snr_db == snr)
        .map(|r| r.ber)
        .expect("record present")
}

fn desk_scale_ordering() -> Outcome {
    let start = Instant::now();
    let (spec, c, model) = setup();
    let dir = tempfile::tempdir().unwrap();
    let manifest = DatasetManifest::with_split(1000, 200, 0, 1);
    generate_dataset(&manifest, dir.path(), &spec, &c, &model).unwrap();
    let train_set = load_split(dir.path(), Split::Train, &spec).unwrap();
    let val_set = load_split(dir.path(), Split::Val, &spec).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 1,
        learning_rate: 5e-4,
        seed: 1,
        ..TrainConfig::default()
    };
    let net = TcnModel::from_seed(TcnConfig::default(), 1).unwrap();
    let trained = train(net, &train_set, &val_set, &cfg).unwrap();

    let setup = SweepSetup::new(model, Some(TcnPipeline::new(trained.model, TaConfig::default())));
    let plan = SweepPlan {
        frames_per_point: 200,
        seed: 7,
        ..SweepPlan::default()
    };
    let records = run_sweep(&plan, &setup).unwrap();
    eprint!("{}", records_to_csv(&records));

    let tol = 1.1;
    let mut violations = Vec::new();
    for &snr in &plan.snr_grid_db {
        let tcn_dpa = ber(&records, EstimatorId::TcnDpa, snr);
        let tcn_dpa_ta = ber(&records, EstimatorId::TcnDpaTa, snr);
        if tcn_dpa_ta > tol * tcn_dpa {
            violations.push(format!("{snr} dB: TCN-DPA-TA {tcn_dpa_ta:.3e} > 1.1 x TCN-DPA {tcn_dpa:.3e}"));
        }
        if snr == 30.0 || snr == 40.0 {
            let dpa = ber(&records, EstimatorId::Dpa, snr);
            if tcn_dpa > dpa {
                violations.push(format!("{snr} dB: TCN-DPA {tcn_dpa:.3e} > DPA {dpa:.3e}"));
            }
            let (best_id, best) = EstimatorId::CLASSICAL
                .iter()
                .map(|&id| (id, ber(&records, id, snr)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if tcn_dpa_ta > tol * best {
                violations.push(format!(
                    "{snr} dB: TCN-DPA-TA {tcn_dpa_ta:.3e} > 1.1 x {best_id} {best:.3e}"
                ));
            }
        }
    }
    let summary = format!(
        "best val loss {:.3e} (epoch {}); 40 dB BER: DPA {:.3e}, TRFI {:.3e}, TCN-DPA {:.3e}, TCN-DPA-TA {:.3e}; {:.0?}",
        trained.best_val_loss,
        trained.best_epoch,
        ber(&records, EstimatorId::Dpa, 40.0),
        ber(&records, EstimatorId::Trfi, 40.0),
        ber(&records, EstimatorId::TcnDpa, 40.0),
        ber(&records, EstimatorId::TcnDpaTa, 40.0),
        start.elapsed()
    );
    if violations.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{summary}; violated: {}", violations.join("; ")))
    }
}

// 10 ------------------------------------------------------------------------

/// generate -> train -> sweep into `dir`; returns every artifact's bytes.
fn pipeline_artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let (spec, c, model) = setup();
    let manifest = DatasetManifest::with_split(16, 4, 4, 77);
    let data = dir.join("data");
    generate_dataset(&manifest, &data, &spec, &c, &model).unwrap();
    let train_set = load_split(&data, Split::Train, &spec).unwrap();
    let val_set = load_split(&data, Split::Val, &spec).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        seed: 77,
        dropout: 0.1,
        ..TrainConfig::default()
    };
    let net = TcnModel::from_seed(TcnConfig::default(), 77).unwrap();
    let trained = train(net, &train_set, &val_set, &cfg).unwrap();
    let mut ckpt = Vec::new();
    write_checkpoint(&trained.model, &mut ckpt).unwrap();

    let setup = SweepSetup::new(model, Some(TcnPipeline::new(trained.model, TaConfig::default())));
    let plan = SweepPlan {
        snr_grid_db: vec![10.0, 30.0],
        frames_per_point: 4,
        seed: 77,
        ..SweepPlan::default()
    };
    let csv = records_to_csv(&run_sweep(&plan, &setup).unwrap());

    let mut artifacts: Vec<(String, Vec<u8>)> = fs::read_dir(&data)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    artifacts.sort();
    artifacts.push(("model.ckpt".into(), ckpt));
    artifacts.push(("results.csv".into(), csv.into_bytes()));
    artifacts
}

fn reproducibility() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline_artifacts(a.path());
    let second = pipeline_artifacts(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        first.len() == second.len() && first.len() == 9 && differing.is_empty(),
        format!("{} artifacts compared byte for byte, differing: {differing:?}", first.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome, bool); 10] = [
        (1, "estimator exactness on a static noise-free channel", estimator_exactness, true),
        (2, "reduction identities", reduction_identities, true),
        (3, "oracle equivalence (slicer, frequency and time averaging)", oracle_equivalence, true),
        (4, "TCN gradient check", gradient_check, true),
        (5, "causality and receptive field", causality, true),
        (6, "channel statistics (Jakes autocorrelation, AWGN)", channel_statistics, true),
        (7, "TA noise contraction", ta_contraction, true),
        (8, "DPA error-propagation trend", dpa_error_trend, true),
        (9, "desk-scale end-to-end BER ordering", desk_scale_ordering, false),
        (10, "generate/train/sweep reproducibility", reproducibility, true),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut enforced_failures = 0;
    for (n, name, run, enforced) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let result = run();
        let status = if result.pass { "PASS" } else { "FAIL" };
        let note = if !result.pass && !enforced { " (reported, not enforced)" } else { "" };
        println!("criterion {n:>2} {status}{note}: {name} -- {}", result.detail);
        if !result.pass && enforced {
            enforced_failures += 1;
        }
    }
    if enforced_failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
