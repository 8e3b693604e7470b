use ampcc::asc::{asc_decode, asc_encode, asc_transmit, random_sections, AscConfig, AscSystem, Scaling};
use ampcc::denoise::{CodeSpec, Denoiser};
use ampcc::evolve::transfer::Mmse;
use ampcc::evolve::{coupled_se, se_fixed_point, CoupledOpts, Phi};
use ampcc::model::{Constellation, OutputChannel};

fn bpsk() -> Denoiser {
    Denoiser::new(CodeSpec::Uncoded, Constellation::Bpsk).unwrap()
}

fn block_power(scaling: Scaling) -> Vec<f64> {
    let mut cfg = AscConfig::new(6, 3, 8192, 4096, 10.0);
    cfg.scaling = scaling;
    let frames = 8;
    let mut p = vec![0.0; cfg.blocks()];
    for f in 0..frames {
        cfg.seed = f;
        let sys = AscSystem::build(&cfg).unwrap();
        let c = random_sections(&cfg, &bpsk(), f);
        let x = asc_encode(&sys, &c).unwrap();
        for (acc, b) in p.iter_mut().zip(&x.blocks) {
            *acc += b.iter().map(|v| v * v).sum::<f64>() / (b.len() * frames as usize) as f64;
        }
    }
    p
}

#[test]
fn interior_block_power() {
    let p = block_power(Scaling::PowerNormalized);
    for &x in &p[2..6] {
        assert!((x - 1.0).abs() < 0.02, "{p:?}");
    }
    let p = block_power(Scaling::Average);
    for &x in &p[2..6] {
        assert!((x - 1.0 / 3.0).abs() < 0.02 / 3.0, "{p:?}");
    }
}

#[test]
fn coupling_beats_the_uncoupled_fixed_point() {
    let snr = 14.5;
    let mut cfg = AscConfig::new(20, 3, 2048, 1024, snr);
    cfg.t_max = 300;
    let den = bpsk();
    let ch = OutputChannel::awgn(cfg.sigma2()).unwrap();
    let phi = Phi::awgn(cfg.delta(), cfg.sigma2());
    let psi = Mmse(Constellation::Bpsk);
    let stall = se_fixed_point(&phi, &psi).unwrap().v_star;
    assert!(stall > 0.1);
    let pred = coupled_se(20, 3, &phi, &psi, &CoupledOpts::absent()).unwrap().section_v;

    let seeds = 20;
    let mut mse = [0.0; 20];
    for s in 0..seeds {
        cfg.seed = 100 + s;
        let sys = AscSystem::build(&cfg).unwrap();
        let c = random_sections(&cfg, &den, s);
        let obs = asc_transmit(&asc_encode(&sys, &c).unwrap(), &ch, cfg.seed, s);
        let (_, tr) = asc_decode(&sys, &obs, &den, &ch, 1e-10, Some(&c)).unwrap();
        for (m, x) in mse.iter_mut().zip(tr.section_mse.last().unwrap()) {
            *m += x / seeds as f64;
        }
    }
    for k in 3..17 {
        assert!(mse[k] <= 10.0 * pred[k], "section {k}: {} vs SE {}", mse[k], pred[k]);
        assert!(mse[k] < 0.01 * stall);
    }
}

#[test]
fn interleaved_modes_decode() {
    for mode in [ampcc::asc::AscMode::Interleaved, ampcc::asc::AscMode::InterleavedCommon] {
        let mut cfg = AscConfig::new(6, 2, 1024, 1024, 12.0);
        cfg.mode = mode;
        let den = bpsk();
        let ch = OutputChannel::awgn(cfg.sigma2()).unwrap();
        let sys = AscSystem::build(&cfg).unwrap();
        let c = random_sections(&cfg, &den, 1);
        let obs = asc_transmit(&asc_encode(&sys, &c).unwrap(), &ch, 3, 1);
        let (_, tr) = asc_decode(&sys, &obs, &den, &ch, 1e-10, Some(&c)).unwrap();
        assert!(tr.section_mse.last().unwrap().iter().all(|&m| m < 1e-2), "{mode:?}");
    }
}
