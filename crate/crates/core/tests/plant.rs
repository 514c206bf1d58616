use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::excitation::{generate_prms, PrmsConfig};
use romkit::plant::*;

/// Independent per-state evaluation of the plant derivative. Each state index
/// is decoded into (column, block, stage) and its right-hand side written out
/// directly from the model equations.
fn oracle_derivative(cfg: &PlantConfig, x: &[f64], u: &Input) -> Vec<f64> {
    let s_n = cfg.stages_per_column;
    let col_len = 10 * s_n;
    let c = &cfg.constants;
    let h = &cfg.heat_transfer_gains;
    let idx = |col: usize, block: usize, stage: usize| col * col_len + block * s_n + stage;
    let (i_h1, i_h2, i_reb) = (2 * col_len, 2 * col_len + 1, 2 * col_len + 2);
    let (f_l, q_reb, f_g) = (u.0[0], u.0[1], u.0[2]);

    // inlet value of block `b` of column `col` (species 0..4 liquid, 4 TL,
    // 5..9 gas species, 9 TG)
    let inlet = |col: usize, b: usize| -> f64 {
        if col == 0 {
            match b {
                0..=3 => (1.0 - c.makeup_fraction) * x[idx(1, b, 0)] + c.makeup_fraction * c.fresh_solvent[b],
                4 => x[i_h2] - h.trim_cooler * (x[i_h2] - c.cooling_water_temp),
                5..=8 => c.flue_gas[b - 5],
                _ => c.flue_gas_temp,
            }
        } else {
            match b {
                0..=4 => {
                    if b == 4 {
                        x[i_h1]
                    } else {
                        x[idx(0, b, 0)]
                    }
                }
                5..=8 => c.vapor_base[b - 5] * (c.vapor_temp_sensitivity * (x[i_reb] - c.reboiler_reference_temp)).exp(),
                _ => x[i_reb],
            }
        }
    };

    let mut dx = vec![0.0; x.len()];
    for col in 0..2 {
        let flow = cfg.column_flow_coefficients[col];
        let l_rate = flow.liquid * f_l;
        let g_rate = if col == 0 { flow.gas * f_g } else { flow.gas * c.vapor_flow_per_duty * q_reb };
        let tr = cfg.reaction_rate_gains[col];
        for j in 0..s_n {
            let cl = |s: usize| x[idx(col, s, j)];
            let cg = |s: usize| x[idx(col, 5 + s, j)];
            let tl = x[idx(col, 4, j)];
            let tg = x[idx(col, 9, j)];
            let k_co2 = tr.co2_equilibrium * (c.co2_temp_sensitivity * (tl - c.reference_temp)).exp();
            let vol = (c.volatility_temp_sensitivity * (tl - c.reference_temp)).exp();
            let r_n2 = tr.rate_gains[0] * (c.n2_solubility * cg(0) - cl(0));
            let r_co2 = tr.rate_gains[1] * (cg(1) * cl(2) / c.mea_reference - k_co2 * cl(1));
            let r_mea = tr.rate_gains[2] * (cg(2) - c.mea_volatility * vol * cl(2));
            let r_h2o = tr.rate_gains[3] * (cg(3) - c.water_volatility * vol * cl(3));
            let rates = [r_n2, r_co2, r_mea, r_h2o];
            for b in 0..10 {
                let here = x[idx(col, b, j)];
                let transport = if b < 5 {
                    let above = if j + 1 < s_n { x[idx(col, b, j + 1)] } else { inlet(col, b) };
                    l_rate * (above - here)
                } else {
                    let below = if j > 0 { x[idx(col, b, j - 1)] } else { inlet(col, b) };
                    -g_rate * (here - below)
                };
                let source = match b {
                    0 | 1 | 3 => c.liquid_holdup * rates[b],
                    2 => c.liquid_holdup * (rates[2] - rates[1]),
                    4 => {
                        let cap: f64 = (0..4).map(|s| cl(s) * c.liquid_heat_capacity[s]).sum();
                        (tr.heat_transfer * (tg - tl) + c.liquid_holdup * (c.heat_of_absorption * r_co2 + c.heat_of_vaporization * r_h2o)) / cap
                    }
                    5..=8 => -c.gas_holdup * rates[b - 5],
                    _ => {
                        let cap: f64 = (0..4).map(|s| cg(s) * c.gas_heat_capacity[s]).sum();
                        -tr.heat_transfer * (tg - tl) / cap
                    }
                };
                dx[idx(col, b, j)] = transport + source;
            }
        }
    }
    let rich_out = x[idx(0, 4, 0)];
    let lean_out = x[idx(1, 4, 0)];
    dx[i_h1] = h.exchanger_flow * f_l * (rich_out - x[i_h1]) + h.exchanger_tube * (x[i_h2] - x[i_h1]);
    dx[i_h2] = h.exchanger_flow * f_l * (x[i_reb] - x[i_h2]) + h.exchanger_shell * (x[i_h1] - x[i_h2]);
    dx[i_reb] = h.reboiler_flow * f_l * (lean_out - x[i_reb]) + h.reboiler_duty * q_reb - h.reboiler_loss * (x[i_reb] - c.ambient_temp);
    dx
}

fn random_input(cfg: &PlantConfig, rng: &mut ChaCha8Rng) -> Input {
    let mut u = [0.0; NUM_INPUTS];
    for (v, [lo, hi]) in u.iter_mut().zip(cfg.input_bounds) {
        *v = rng.random_range(lo..=hi);
    }
    Input(u)
}

fn random_state(base: &DVector<f64>, rng: &mut ChaCha8Rng, spread: f64) -> DVector<f64> {
    base.map(|v| v * (1.0 + spread * rng.random_range(-1.0..1.0)))
}

#[test]
fn derivative_matches_scalar_loop_oracle_on_random_points() {
    let cfg = PlantConfig::default();
    let base = initial_guess(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let x = random_state(&base, &mut rng, 0.3);
        let u = random_input(&cfg, &mut rng);
        let got = plant_derivative(&cfg, &x, &u).unwrap();
        let want = oracle_derivative(&cfg, x.as_slice(), &u);
        for (i, (a, b)) in got.iter().zip(&want).enumerate() {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "state {i}: {a} vs {b}");
        }
    }
}

#[test]
fn steady_state_is_a_fixed_point_and_unique() {
    let cfg = PlantConfig::default();
    let u = cfg.nominal_input();
    let xs = steady_state(&cfg, &u).unwrap();
    assert_eq!(xs.len(), 103);
    assert!(plant_derivative(&cfg, &xs, &u).unwrap().amax() < 1e-8);
    assert!((step(&cfg, &xs, &u, None).unwrap() - &xs).amax() < 1e-6);

    // a second start well away from the first
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let other = random_state(&initial_guess(&cfg), &mut rng, 0.2);
    let xs2 = steady_state_from(&cfg, &u, &other, SteadyStateOptions::default()).unwrap();
    assert!((&xs2 - &xs).amax() < 1e-6, "{}", (&xs2 - &xs).amax());
}

#[test]
fn zero_transfer_gains_leave_only_transport() {
    let mut cfg = PlantConfig::default();
    for t in &mut cfg.reaction_rate_gains {
        t.rate_gains = [0.0; 4];
        t.heat_transfer = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lay = cfg.layout();
    for _ in 0..20 {
        let x = random_state(&initial_guess(&cfg), &mut rng, 0.3);
        let u = random_input(&cfg, &mut rng);
        let all = plant_derivative_terms(&cfg, &x, &u, Terms::All).unwrap();
        let transport = plant_derivative_terms(&cfg, &x, &u, Terms::TransportOnly).unwrap();
        for i in 0..2 * lay.column_len() {
            assert_eq!(all[i], transport[i], "{}", lay.label(i));
        }
    }
}

#[test]
fn uniform_profiles_equal_to_their_inlets_do_not_move() {
    let cfg = PlantConfig::default();
    let lay = cfg.layout();
    let c = cfg.constants;
    let mut x = initial_guess(&cfg);
    let t_reb = x[lay.t_reb()];
    let shift = (c.vapor_temp_sensitivity * (t_reb - c.reboiler_reference_temp)).exp();
    let t_h2 = x[lay.t_h2()];
    for j in 0..lay.stages {
        for s in 0..NUM_SPECIES {
            // fresh solvent everywhere makes both liquid inlets equal to it
            x[lay.liquid(ABSORBER, s, j)] = c.fresh_solvent[s];
            x[lay.liquid(DESORBER, s, j)] = c.fresh_solvent[s];
            x[lay.gas(ABSORBER, s, j)] = c.flue_gas[s];
            x[lay.gas(DESORBER, s, j)] = c.vapor_base[s] * shift;
        }
        x[lay.liquid_temp(ABSORBER, j)] = t_h2 - cfg.heat_transfer_gains.trim_cooler * (t_h2 - c.cooling_water_temp);
        x[lay.gas_temp(ABSORBER, j)] = c.flue_gas_temp;
        x[lay.liquid_temp(DESORBER, j)] = x[lay.t_h1()];
        x[lay.gas_temp(DESORBER, j)] = t_reb;
    }
    let d = plant_derivative_terms(&cfg, &x, &cfg.nominal_input(), Terms::TransportOnly).unwrap();
    for i in 0..2 * lay.column_len() {
        assert_eq!(d[i], 0.0, "{}", lay.label(i));
    }
    // the desorber liquid temperature follows T_h1, which itself moves, so
    // compare one step only on the species blocks
    let next = step_transport_only(&cfg, &x, &cfg.nominal_input()).unwrap();
    for col in [ABSORBER, DESORBER] {
        for s in 0..NUM_SPECIES {
            for j in 0..lay.stages {
                let i = lay.liquid(col, s, j);
                assert!((next[i] - x[i]).abs() <= 1e-9 * x[i].abs().max(1.0), "{}", lay.label(i));
            }
        }
    }
}

#[test]
fn ten_substeps_agree_with_a_fine_integration() {
    let cfg = PlantConfig::default();
    let fine = PlantConfig { integrator_substeps: 1000, ..cfg.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_state(&steady_state(&cfg, &cfg.nominal_input()).unwrap(), &mut rng, 0.05);
    let u = random_input(&cfg, &mut rng);
    let a = step(&cfg, &x, &u, None).unwrap();
    let b = step(&fine, &x, &u, None).unwrap();
    for i in 0..a.len() {
        assert!((a[i] - b[i]).abs() <= 1e-5 * b[i].abs().max(1e-12), "{i}: {} vs {}", a[i], b[i]);
    }
}

#[test]
fn step_is_bit_deterministic() {
    let cfg = PlantConfig::default();
    let x = initial_guess(&cfg);
    let u = cfg.nominal_input();
    let w = DVector::from_fn(x.len(), |i, _| 1e-3 * i as f64);
    assert_eq!(step(&cfg, &x, &u, Some(&w)).unwrap(), step(&cfg, &x, &u, Some(&w)).unwrap());
}

#[test]
fn prms_excitation_keeps_the_plant_physical_for_12000_steps() {
    let cfg = PlantConfig::default();
    let mut x = steady_state(&cfg, &cfg.nominal_input()).unwrap();
    let inputs = generate_prms(&PrmsConfig { horizon_samples: 12_000, seed: 5, ..Default::default() }).unwrap();
    for u in &inputs {
        x = step(&cfg, &x, u, None).unwrap();
        check_physical(cfg.layout(), &x).unwrap();
    }
}
