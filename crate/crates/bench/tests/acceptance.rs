//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers to run a subset.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reuse_bench::datagen::{self, DataKind};
use reuse_bench::{build_index, run_on, DataSource, IndexKind, WorkloadSpec};
use reuse_index::distribution::{build_histogram, histogram_distance, ks_distance};
use reuse_index::index::{build_rmi, build_rmrt};
use reuse_index::models::{fold_affine, make_maps, LinearModel, Span, TinyNet, TrainParams};
use reuse_index::pool::{adapt_entry, default_bins, enumerate_histograms, find_reusable, synthesize_dataset};
use reuse_index::{pretrain_pool, InsertOutcome, LearnedIndex, ModelKind, ModelPool, ModelSource};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

/// Brute force over all 3^m sequences of masses in {0, u, 2u}.
fn brute_force_count(eps: f64, m: usize) -> usize {
    let unit = (1.0 - eps) / 2.0;
    let mut count = 0;
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let (mut c, mut sum) = (code, 0.0);
        for _ in 0..m {
            sum += (c % 3) as f64 * unit;
            c /= 3;
        }
        if (sum - 1.0).abs() <= 1e-9 {
            count += 1;
        }
    }
    count
}

fn normalized(keys: &[u64]) -> Vec<f64> {
    let (lo, hi) = (keys[0], keys[keys.len() - 1]);
    keys.iter()
        .map(|&k| if hi == lo { 0.0 } else { (k - lo) as f64 / (hi - lo) as f64 })
        .collect()
}

/// Sup of |F_a - F_b| evaluated at every breakpoint by linear counting.
fn brute_force_ks(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (normalized(a), normalized(b));
    let cdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
    na.iter()
        .chain(&nb)
        .map(|&x| (cdf(&na, x) - cdf(&nb, x)).abs())
        .fold(0.0, f64::max)
}

fn mixed_keys(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    let shape = rng.gen_range(0..5);
    let range = 10u64.pow(rng.gen_range(3..16));
    let mut keys: Vec<u64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let x = match shape {
                0 => u,
                1 => u.powi(rng.gen_range(2..10)),
                2 => 1.0 - u.powi(3),
                3 => {
                    let centre = if rng.gen_bool(0.5) { 0.25 } else { 0.7 };
                    (centre + (u - 0.5) * 0.1).clamp(0.0, 1.0)
                }
                _ => (u * 20.0).floor() / 20.0,
            };
            (x * range as f64) as u64
        })
        .collect();
    keys.sort_unstable();
    keys
}

// ------------------------------------------------------------- criteria

fn c1_enumeration() -> Outcome {
    let started = Instant::now();
    let mut parts = Vec::new();
    for (eps, m, want) in [(0.5, 4, 19), (0.8, 10, 8953), (0.9, 12, 1221)] {
        let got = enumerate_histograms(eps, m).map_err(|e| e.to_string())?.len();
        let brute = brute_force_count(eps, m);
        ensure(got == want && brute == want, || {
            format!("eps {eps} m {m}: enumerated {got}, brute force {brute}, expected {want}")
        })?;
        parts.push(format!("eps {eps}/m {m}: {got}"));
    }
    let el = started.elapsed();
    ensure(el < Duration::from_secs(5), || format!("took {el:?}"))?;
    Ok(format!("{} (brute force agrees) in {el:.2?}", parts.join(", ")))
}

fn c2_distance_soundness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checks = 0;
    let mut worst_gap = 0.0f64;
    for _ in 0..1000 {
        let na = rng.gen_range(1..=10_000);
        let nb = rng.gen_range(1..=10_000);
        let a = mixed_keys(&mut rng, na);
        let b = mixed_keys(&mut rng, nb);
        let ks = ks_distance(&a, &b).map_err(|e| e.to_string())?;
        for m in [4, 10, 12, 64] {
            let ha = build_histogram(&a, m).map_err(|e| e.to_string())?;
            let hb = build_histogram(&b, m).map_err(|e| e.to_string())?;
            let d = histogram_distance(&ha, &hb).map_err(|e| e.to_string())?;
            let slack = ha.max_mass().max(hb.max_mass());
            ensure(ks <= d + 1e-9 && d <= ks + slack + 1e-9, || {
                format!("m {m}: ks {ks} dist_h {d} max mass {slack}")
            })?;
            worst_gap = worst_gap.max(d - ks);
            checks += 1;
        }
    }
    let el = started.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    Ok(format!("{checks} pair/m checks, largest dist_h - ks {worst_gap:.4}, in {el:.2?}"))
}

fn c3_ks_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let na = rng.gen_range(1..=50);
        let nb = rng.gen_range(1..=50);
        let hi_a = rng.gen_range(1..200);
        let hi_b = rng.gen_range(1..200);
        let mut a: Vec<u64> = (0..na).map(|_| rng.gen_range(0..=hi_a)).collect();
        let mut b: Vec<u64> = (0..nb).map(|_| rng.gen_range(0..=hi_b)).collect();
        a.sort_unstable();
        b.sort_unstable();
        let fast = ks_distance(&a, &b).map_err(|e| e.to_string())?;
        let slow = brute_force_ks(&a, &b);
        worst = worst.max((fast - slow).abs());
        ensure((fast - slow).abs() <= 1e-12, || format!("{a:?} vs {b:?}: {fast} vs {slow}"))?;
    }
    let table = ks_distance(&[10, 20, 30, 50, 60, 70, 80, 80, 90, 100], &[10, 20, 25, 30, 40, 50, 60, 80, 90, 100])
        .map_err(|e| e.to_string())?;
    ensure((table - 0.2).abs() <= 1e-12, || format!("worked example gives {table}"))?;
    Ok(format!("500 pairs, max deviation {worst:e}; worked example {table}"))
}

fn c4_bound_transfer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pools = Vec::new();
    for (eps, kind) in [(0.5, ModelKind::Linear), (0.8, ModelKind::Linear), (0.8, ModelKind::TinyNet)] {
        pools.push((eps, pretrain_pool(eps, kind, 100, 4, None, &TrainParams::default()).map_err(|e| e.to_string())?));
    }
    let grids: Vec<_> = pools
        .iter()
        .map(|(eps, p)| enumerate_histograms(*eps, p.bins()).unwrap())
        .collect();
    let (mut accepted, mut attempts, mut keys_checked, mut violations) = (0, 0, 0usize, 0usize);
    while accepted < 100 && attempts < 10_000 {
        attempts += 1;
        let which = rng.gen_range(0..pools.len());
        let (eps, pool) = &pools[which];
        let n = rng.gen_range(100..=10_000);
        let keys = if rng.gen_bool(0.5) {
            let g = &grids[which];
            synthesize_dataset(&g[rng.gen_range(0..g.len())].bins, n, rng.gen()).into_vec()
        } else {
            mixed_keys(&mut rng, n)
        };
        let target = build_histogram(&keys, pool.bins()).map_err(|e| e.to_string())?;
        let Some((entry, dist)) = find_reusable(pool, &target, *eps).map_err(|e| e.to_string())? else {
            continue;
        };
        accepted += 1;
        let model = adapt_entry(entry, &keys, dist).map_err(|e| e.to_string())?;
        // Position of a key: first index holding it.
        for (i, &k) in keys.iter().enumerate() {
            if i > 0 && keys[i - 1] == k {
                continue;
            }
            let (lo, hi) = model.window(k, keys.len());
            let last = i + keys[i..].partition_point(|&x| x == k) - 1;
            keys_checked += 1;
            if !(lo <= i && last <= hi) {
                violations += 1;
            }
        }
    }
    ensure(accepted == 100, || format!("only {accepted} accepted pairs in {attempts} attempts"))?;
    ensure(violations == 0, || {
        format!("{violations} of {keys_checked} keys outside their transferred window")
    })?;
    Ok(format!("{accepted} accepted pairs ({attempts} tried), {keys_checked} distinct keys, 0 violations"))
}

fn c5_folding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let model = LinearModel {
            slope: rng.gen_range(-5.0..5.0),
            intercept: rng.gen_range(-5.0..5.0),
        };
        let mut span = |scale: f64| {
            let a = rng.gen_range(-scale..scale);
            Span::new(a, a + rng.gen_range(0.01..scale))
        };
        let (src_k, src_p, tgt_k, tgt_p) = (span(1.0), span(1e3), span(1e6), span(1e5));
        let (t_in, t_out) = make_maps(src_k, src_p, tgt_k, tgt_p).map_err(|e| e.to_string())?;
        let folded = fold_affine(&model, &t_in, &t_out);
        for _ in 0..100 {
            let x = rng.gen_range(tgt_k.start..tgt_k.end);
            // Compose the maps from their endpoint definitions.
            let u = src_k.start + (x - tgt_k.start) * (src_k.end - src_k.start) / (tgt_k.end - tgt_k.start);
            let r = model.slope * u + model.intercept;
            let want = tgt_p.start + (r - src_p.start) * (tgt_p.end - tgt_p.start) / (src_p.end - src_p.start);
            let got = folded.eval(x);
            let rel = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || format!("x {x}: folded {got}, composed {want}"))?;
        }
    }
    Ok(format!("1000 tuples x 100 points, max relative error {worst:e}"))
}

fn c6_insert_budget() -> Outcome {
    let mut lines = Vec::new();
    // A trained leaf (sim 1) and a reused one (sim < 1).
    let trained: Vec<u64> = (0..900).map(|i| i * 100).collect();
    let eps_reuse = 0.5;
    let grid = enumerate_histograms(eps_reuse, default_bins(eps_reuse).unwrap()).unwrap();
    let reused = synthesize_dataset(&grid[grid.len() / 2].bins, 4000, 6).into_vec();
    let pool = pretrain_pool(eps_reuse, ModelKind::Linear, 100, 6, None, &TrainParams::default())
        .map_err(|e| e.to_string())?;
    for (keys, source, eps) in [
        (trained, ModelSource::train_only(ModelKind::Linear), 0.9),
        (reused, ModelSource::Reuse(pool), eps_reuse),
    ] {
        let mut idx = build_rmi(&keys, 1, source, eps, true).map_err(|e| e.to_string())?;
        let leaf = &idx.leaves()[0];
        let (sim, budget, n) = (leaf.similarity(), leaf.insert_budget(), leaf.len());
        ensure(budget > 0, || format!("sim {sim} eps {eps}: zero budget"))?;
        let key = keys[n / 2];
        for i in 0..budget {
            let out = idx.insert(key).map_err(|e| e.to_string())?;
            ensure(out == InsertOutcome::Inserted, || format!("rebuilt at insert {}", i + 1))?;
        }
        let now = idx.leaves()[0].keys().to_vec();
        let ks = ks_distance(&keys, &now).map_err(|e| e.to_string())?;
        ensure(ks <= sim - eps + 1e-9, || format!("ks {ks} exceeds sim - eps {}", sim - eps))?;
        ensure(idx.stats().rebuilds == 0, || "rebuilt before the budget".into())?;
        for &k in &now {
            ensure(idx.key_at(idx.lookup(k).ok_or("key lost")?) == Some(k), || format!("key {k} misplaced"))?;
        }
        let out = idx.insert(key).map_err(|e| e.to_string())?;
        ensure(
            out == InsertOutcome::InsertedWithRebuild && idx.stats().rebuilds == 1,
            || format!("insert {} gave {out:?}, rebuilds {}", budget + 1, idx.stats().rebuilds),
        )?;
        lines.push(format!("sim {sim:.3} eps {eps}: budget {budget}, ks {ks:.4} <= {:.4}", sim - eps));
    }
    Ok(lines.join("; "))
}

fn c7_end_to_end() -> Outcome {
    let started = Instant::now();
    let n = 1_000_000;
    let lookups = 100_000;
    let train = TrainParams {
        max_samples: 10_000,
        ..TrainParams::default()
    };
    let data: Vec<(DataKind, Vec<u64>)> = [DataKind::Uniform, DataKind::Skew { alpha: 3 }, DataKind::Skew { alpha: 9 }]
        .into_iter()
        .map(|k| (k, datagen::generate(k, n, 70)))
        .collect();
    let mut pools = Vec::new();
    for kind in [ModelKind::Linear, ModelKind::TinyNet] {
        for eps in [0.5, 0.9] {
            pools.push(((kind, eps), pretrain_pool(eps, kind, 100, 7, None, &train).map_err(|e| e.to_string())?));
        }
    }
    let mut configs = 0;
    let (mut found, mut total) = (0usize, 0usize);
    for (dk, keys) in &data {
        for index in [IndexKind::Rmrt, IndexKind::RmiMr] {
            for ((kind, eps), warm_pool) in &pools {
                for warm in [true, false] {
                    let spec = WorkloadSpec {
                        data: DataSource::Generated {
                            generator: *dk,
                            n,
                            seed: 70,
                        },
                        index,
                        model: *kind,
                        eps: *eps,
                        train,
                        ..WorkloadSpec::default()
                    };
                    let pool = if warm {
                        warm_pool.clone()
                    } else {
                        ModelPool::empty(*kind, *eps).map_err(|e| e.to_string())?
                    };
                    let label = format!("{} {kind:?} eps {eps} warm {warm} {dk}", index.name());
                    let mut idx = build_index(&spec, keys, Some(pool)).map_err(|e| format!("{label}: {e}"))?;
                    let mut rng = ChaCha8Rng::seed_from_u64(configs);
                    for _ in 0..lookups {
                        let k = keys[rng.gen_range(0..keys.len())];
                        let expect = keys.binary_search(&k).is_ok();
                        let got = idx.lookup(k).and_then(|h| idx.key_at(h)) == Some(k);
                        total += 1;
                        found += usize::from(got == expect);
                        ensure(got == expect, || format!("{label}: lookup {k} wrong"))?;
                    }
                    // Interleaved phase: half inserts, half lookups of live keys.
                    let mut live_extra: Vec<u64> = Vec::new();
                    for _ in 0..lookups {
                        if rng.gen_bool(0.5) {
                            let k = dk.draw(&mut rng);
                            idx.insert(k).map_err(|e| format!("{label}: {e}"))?;
                            live_extra.push(k);
                        }
                        let pick = rng.gen_range(0..keys.len() + live_extra.len());
                        let k = if pick < keys.len() { keys[pick] } else { live_extra[pick - keys.len()] };
                        let got = idx.lookup(k).and_then(|h| idx.key_at(h)) == Some(k);
                        total += 1;
                        found += usize::from(got);
                        ensure(got, || format!("{label}: lookup {k} after inserts failed"))?;
                    }
                    for &k in &live_extra {
                        let got = idx.lookup(k).and_then(|h| idx.key_at(h)) == Some(k);
                        total += 1;
                        found += usize::from(got);
                        ensure(got, || format!("{label}: inserted key {k} lost"))?;
                    }
                    configs += 1;
                }
            }
        }
    }
    let el = started.elapsed();
    ensure(el < Duration::from_secs(300), || {
        format!("all {configs} configurations correct but took {el:.1?} (limit 300 s)")
    })?;
    Ok(format!("{configs} configurations, {found}/{total} lookups correct, {el:.1?}"))
}

fn c8_reuse_skips_training() -> Outcome {
    let eps = 0.8;
    let kind = ModelKind::TinyNet;
    let params = TrainParams::default();
    let pool = pretrain_pool(eps, kind, 100, 8, None, &params).map_err(|e| e.to_string())?;
    let grid = enumerate_histograms(eps, pool.bins()).map_err(|e| e.to_string())?;
    let hist = grid.iter().find(|h| h.bins.iter().filter(|&&b| b > 0.0).count() == 7).unwrap();
    let keys = synthesize_dataset(&hist.bins, 1_000_000, 8).into_vec();
    let time = |source: ModelSource| -> Result<(Duration, u64, Option<f64>), String> {
        let t = Instant::now();
        let idx = build_rmrt(&keys, 10_000, 16, source, eps, true).map_err(|e| e.to_string())?;
        let el = t.elapsed();
        let s = idx.stats();
        Ok((el, s.training_runs, s.reuse_rate))
    };
    let (warm, warm_runs, warm_rate) = time(ModelSource::Reuse(pool))?;
    let (cold, cold_runs, _) = time(ModelSource::Reuse(
        ModelPool::empty(kind, eps).map_err(|e| e.to_string())?.with_params(params),
    ))?;
    let speedup = cold.as_secs_f64() / warm.as_secs_f64();
    let detail = format!(
        "warm {warm:.2?} with {warm_runs} training runs (reuse rate {:?}), empty pool {cold:.2?} with {cold_runs}, speedup {speedup:.1}x",
        warm_rate
    );
    ensure(warm_runs == 0 && speedup >= 5.0, || detail.clone())?;
    Ok(detail)
}

fn mean_latency(spec: &WorkloadSpec, keys: &[u64], pool: Option<&ModelPool>) -> Result<f64, String> {
    // Median of three runs to damp scheduler noise.
    let mut runs = Vec::new();
    for _ in 0..3 {
        runs.push(
            run_on(spec, keys, pool.cloned())
                .map_err(|e| e.to_string())?
                .lookup_mean_ns,
        );
    }
    runs.sort_by(f64::total_cmp);
    Ok(runs[1])
}

fn c9_skew_adaptivity() -> Outcome {
    let eps = 0.9;
    let pool = pretrain_pool(eps, ModelKind::Linear, 100, 9, None, &TrainParams::default()).map_err(|e| e.to_string())?;
    let mut lat = Vec::new();
    for alpha in [1u32, 9] {
        let dk = DataKind::skew(alpha)?;
        let keys = datagen::generate(dk, 1_000_000, 90);
        for index in [IndexKind::Rmrt, IndexKind::Rmi] {
            let spec = WorkloadSpec {
                data: DataSource::Generated {
                    generator: dk,
                    n: keys.len(),
                    seed: 90,
                },
                index,
                eps,
                lookups: 100_000,
                ..WorkloadSpec::default()
            };
            lat.push(mean_latency(&spec, &keys, Some(&pool))?);
        }
    }
    let (rmrt1, rmi1, rmrt9, rmi9) = (lat[0], lat[1], lat[2], lat[3]);
    let (rmrt_f, rmi_f) = (rmrt9 / rmrt1, rmi9 / rmi1);
    let detail = format!(
        "rmrt {rmrt1:.0} -> {rmrt9:.0} ns ({rmrt_f:.2}x), rmi without reuse {rmi1:.0} -> {rmi9:.0} ns ({rmi_f:.2}x)"
    );
    ensure(rmrt_f <= 1.5 && rmi_f > rmrt_f, || detail.clone())?;
    Ok(detail)
}

fn c10_eps_windows() -> Outcome {
    let keys = datagen::generate(DataKind::Skew { alpha: 3 }, 1_000_000, 100);
    let mut rows = Vec::new();
    let mut linear_rmrt = Vec::new();
    for eps in [0.5, 0.6, 0.7, 0.8, 0.9] {
        let params = TrainParams::default();
        let pool = pretrain_pool(eps, ModelKind::TinyNet, 100, 10, None, &params).map_err(|e| e.to_string())?;
        let rmrt = build_rmrt(&keys, 10_000, 16, ModelSource::Reuse(pool.clone()), eps, true).map_err(|e| e.to_string())?;
        let rmi = build_rmi(&keys, 1024, ModelSource::Reuse(pool), eps, true).map_err(|e| e.to_string())?;
        rows.push((eps, rmrt.stats().mean_window, rmi.stats().mean_window));
        let lin = pretrain_pool(eps, ModelKind::Linear, 100, 10, None, &params).map_err(|e| e.to_string())?;
        let lin_rmrt = build_rmrt(&keys, 10_000, 16, ModelSource::Reuse(lin), eps, true).map_err(|e| e.to_string())?;
        linear_rmrt.push(lin_rmrt.stats().mean_window);
    }
    let fmt = |f: &dyn Fn(&(f64, f64, f64)) -> f64| rows.iter().map(|r| format!("{:.0}", f(r))).collect::<Vec<_>>().join(" ");
    let detail = format!(
        "tinynet rmrt [{}], tinynet rmi-mr [{}] (eps 0.5..0.9); linear rmrt, not gated: [{}]",
        fmt(&|r| r.1),
        fmt(&|r| r.2),
        linear_rmrt.iter().map(|w| format!("{w:.0}")).collect::<Vec<_>>().join(" ")
    );
    let non_increasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        non_increasing(rows.iter().map(|r| r.1).collect()) && non_increasing(rows.iter().map(|r| r.2).collect()),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn c11_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut draws, mut skipped) = (0, 0);
    let mut worst = 0.0f64;
    while draws < 100 {
        let mut p = [0.0; TinyNet::PARAM_COUNT];
        for v in &mut p {
            *v = rng.gen_range(-2.0..2.0);
        }
        let net = TinyNet::from_params(&p);
        let xs: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powi(3)).collect();
        let kink = xs.iter().any(|&x| (0..4).any(|k| (net.w_in[k] * x + net.b_in[k]).abs() < 1e-3));
        if kink {
            skipped += 1;
            continue;
        }
        draws += 1;
        let (_, g) = net.loss_and_gradient(&xs, &ys);
        for i in 0..TinyNet::PARAM_COUNT {
            let h = 1e-6;
            let (mut up, mut down) = (p, p);
            up[i] += h;
            down[i] -= h;
            let numeric = (TinyNet::from_params(&up).loss_and_gradient(&xs, &ys).0
                - TinyNet::from_params(&down).loss_and_gradient(&xs, &ys).0)
                / (2.0 * h);
            let scale = numeric.abs().max(g[i].abs());
            let rel = if scale < 1e-9 { 0.0 } else { (numeric - g[i]).abs() / scale };
            worst = worst.max(rel);
            ensure(rel <= 1e-4, || format!("param {i}: analytic {} numeric {numeric}", g[i]))?;
        }
    }
    Ok(format!("100 draws ({skipped} redrawn near a kink), max relative error {worst:.2e}"))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "enumeration counts", c1_enumeration),
        (2, "distance soundness", c2_distance_soundness),
        (3, "KS oracle equivalence", c3_ks_oracle),
        (4, "bound transfer containment", c4_bound_transfer),
        (5, "affine folding", c5_folding),
        (6, "insertion budget", c6_insert_budget),
        (7, "end-to-end correctness", c7_end_to_end),
        (8, "reuse eliminates training", c8_reuse_skips_training),
        (9, "skew adaptivity", c9_skew_adaptivity),
        (10, "eps monotonicity", c10_eps_windows),
        (11, "gradient check", c11_gradient_check),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
