use idsim_core::features::calendar::{session_len, SLOTS_PER_DAY};
use idsim_core::features::RowSet;
use idsim_core::ingest::{synth_market, SynthConfig, TradeGrid};

fn small(n_days: usize, emit_trades: bool) -> SynthConfig {
    SynthConfig {
        n_days,
        emit_trades,
        ..SynthConfig::default()
    }
}

#[test]
fn ingested_trades_reproduce_simulated_grid() {
    let cfg = small(6, true);
    let a = synth_market(&cfg, 3).unwrap();
    let b = synth_market(
        &SynthConfig {
            emit_trades: false,
            ..cfg
        },
        3,
    )
    .unwrap();
    let (ga, gb) = (&a.market.grid, &b.market.grid);
    assert_eq!(ga.traded, gb.traded);
    for (x, y) in ga.price.iter().zip(&gb.price) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
    assert_eq!(a.market.fundamentals, b.market.fundamentals);
    let r = a.ingest.unwrap();
    assert_eq!(r.trades.rejected, 0);
    assert_eq!(r.trades.final_phase_dropped, 0);
    assert_eq!(r.slopes_imputed, 0);
    assert!(r.trades.accepted >= ga.traded.iter().filter(|&&t| t).count());
}

#[test]
fn fixed_seed_is_deterministic() {
    let cfg = small(3, true);
    let a = synth_market(&cfg, 11).unwrap();
    let b = synth_market(&cfg, 11).unwrap();
    assert_eq!(a.market, b.market);
    assert_eq!(a.raw, b.raw);
    let c = synth_market(&cfg, 12).unwrap();
    assert_ne!(a.market.grid.change, c.market.grid.change);
}

#[test]
fn sample_statistics_look_sane() {
    let out = synth_market(&small(30, false), 5).unwrap();
    let g = &out.market.grid;
    let days: Vec<usize> = (0..g.n_days).collect();
    let params = out
        .truth
        .model
        .predict_params(&out.market, &RowSet::all(&days))
        .unwrap();
    let mut n = 0usize;
    let (mut pi, mut sig, mut share) = (0.0, Vec::new(), 0.0);
    for d in 0..g.n_days {
        for h in 0..24 {
            for t in 0..session_len(h) {
                let i = TradeGrid::idx(d, h, t);
                let p = &params[d * SLOTS_PER_DAY + (i - d * SLOTS_PER_DAY)];
                pi += p.pi;
                sig.push(p.jsu.sigma);
                share += f64::from(u8::from(g.traded[i]));
                n += 1;
            }
        }
    }
    sig.sort_by(f64::total_cmp);
    println!(
        "buckets {n}, mean pi {:.3}, trade share {:.3}, sigma q05 {:.3} q50 {:.3} q95 {:.3}",
        pi / n as f64,
        share / n as f64,
        sig[n / 20],
        sig[n / 2],
        sig[n * 19 / 20]
    );
    let spot_min = g.spot.iter().cloned().fold(f64::INFINITY, f64::min);
    let spot_max = g.spot.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mo: Vec<f64> = out
        .market
        .fundamentals
        .values
        .iter()
        .map(|v| v[4])
        .collect();
    println!(
        "spot range {spot_min}..{spot_max}; mo range {:?}",
        (
            mo.iter().cloned().fold(f64::INFINITY, f64::min),
            mo.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        )
    );
    assert!((pi / n as f64 - share / n as f64).abs() < 0.02);
}
