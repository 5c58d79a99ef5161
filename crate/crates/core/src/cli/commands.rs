use serde::Serialize;
use serde_json::json;

use crate::construction::{
    adversarial_family, claim_mean_check, hlms_weights, tower_lower_bound, sarl_schedule,
    verify_large_bias, EpsSchedule, Instance, Verdict,
};
use crate::energy::{sarl_pair_check, subspace_energy, verify_energy_middle, verify_energy_start};
use crate::error::{Error, Result};
use crate::fourier::{full_spectrum, regularity_check, DensityFunction, PointFunction};
use crate::qarl::{run_qarl, QarlConfig};
use crate::quadratic::{linear_layer_regularity, RegularityParams};

use super::{
    parse_list, parse_number, parse_subspace, Check, ConstructArgs, EnergyArgs, GrowthPreset,
    Preset, QarlArgs, RegularityArgs, ScheduleArgs, Session, SpectrumArgs, VerifyArgs, EXIT_FAIL,
    EXIT_PASS, EXIT_RESOURCE,
};

fn verdict_code(pass: bool) -> i32 {
    if pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn read_function(path: &std::path::Path, session: &mut Session) -> Result<DensityFunction> {
    session.input(path);
    DensityFunction::read(path, &session.budget)
}

pub(super) fn construct(a: &ConstructArgs, session: &mut Session) -> Result<i32> {
    let weights = match (&a.weights, a.preset, a.eps) {
        (Some(raw), _, _) => parse_list(raw, parse_number)?,
        (None, Some(Preset::Hlms), Some(eps)) => hlms_weights(a.p, eps)?,
        _ => {
            return Err(Error::InvalidParameter(
                "give --weights or --preset hlms --eps".into(),
            ))
        }
    };
    session.seed = Some(a.seed);
    session.parameters = json!({ "p": a.p, "n": a.n, "weights": weights, "seed": a.seed });
    let inst = Instance::build(a.p, a.n, &weights, a.seed, &session.budget)?;
    let (manifest, density) = inst.save(&session.out, &a.stem)?;
    session.output(&manifest);
    session.output(&density);
    let dims: Vec<usize> = (1..=inst.s()).map(|i| inst.big_d(i)).collect();
    println!("s = {}", inst.s());
    println!("D = {dims:?}");
    println!("mean density = {}", inst.f.mean());
    println!("wrote {}", manifest.display());
    Ok(EXIT_PASS)
}

pub(super) fn spectrum(a: &SpectrumArgs, session: &mut Session) -> Result<i32> {
    let f = read_function(&a.f, session)?;
    let spec = full_spectrum(&f, &session.budget)?;
    let (arg, modulus) = spec.argmax();
    let report = json!({
        "p": f.p(),
        "n": f.n(),
        "argmax": arg,
        "max_modulus": modulus,
        "energy": spec.energy(),
        "coefficients": spec.values.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    });
    session.write_json("spectrum.json", &report)?;
    println!("largest coefficient at index {arg}, modulus {modulus}");
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct BadCoset {
    rep: Vec<u32>,
    frequency: Vec<u32>,
    bias: f64,
}

pub(super) fn regularity(a: &RegularityArgs, session: &mut Session) -> Result<i32> {
    let f = read_function(&a.f, session)?;
    let h = parse_subspace(f.p(), f.n(), &a.subspace, &session.budget)?;
    let report = regularity_check(&f, &h, a.eps, &session.budget)?;
    let bad: Vec<BadCoset> = report
        .bad_cosets
        .iter()
        .map(|b| BadCoset {
            rep: b.coset.rep().coords().to_vec(),
            frequency: b.frequency.coords().to_vec(),
            bias: b.value,
        })
        .collect();
    let regular = report.is_regular();
    session.write_json(
        "regularity.json",
        &json!({
            "epsilon": a.eps,
            "codim": h.codim(),
            "num_cosets": report.num_cosets,
            "bad_fraction": report.bad_fraction,
            "max_bias": report.max_bias,
            "regular": regular,
            "bad_cosets": bad,
        }),
    )?;
    println!(
        "codim {}: bad fraction {} ({} cosets), regular = {regular}",
        h.codim(),
        report.bad_fraction,
        report.num_cosets
    );
    Ok(verdict_code(regular))
}

pub(super) fn energy(a: &EnergyArgs, session: &mut Session) -> Result<i32> {
    let f = read_function(&a.f, session)?;
    let h = parse_subspace(f.p(), f.n(), &a.subspace, &session.budget)?;
    let e = subspace_energy(&f, &h, &session.budget)?;
    session.write_json("energy.json", &json!({ "codim": h.codim(), "energy": e }))?;
    println!("energy = {e}");
    Ok(EXIT_PASS)
}

fn load_instance(a: &VerifyArgs, session: &mut Session) -> Result<(Instance, Vec<String>)> {
    let path = a
        .instance
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("--instance is required".into()))?;
    session.input(path);
    let (inst, report) = Instance::load_unverified(path, &session.budget)?;
    Ok((inst, report.mismatches))
}

pub(super) fn verify(a: &VerifyArgs, session: &mut Session) -> Result<i32> {
    session.seed = Some(a.seed);
    session.parameters = json!({ "check": a.which, "random": a.random, "seed": a.seed });
    if let Check::Schedule = a.which {
        return verify_schedule(a, session);
    }
    let (inst, mismatches) = load_instance(a, session)?;
    let budget = session.budget;
    let (pass, body) = match a.which {
        Check::Prop24 => {
            let reports = adversarial_family(&inst)?
                .iter()
                .map(|w| verify_large_bias(&inst, w, &budget))
                .collect::<Result<Vec<_>>>()?;
            let failing: Vec<usize> = reports
                .iter()
                .enumerate()
                .filter(|(_, r)| !r.pass)
                .map(|(k, _)| k)
                .collect();
            (failing.is_empty(), json!({ "subspaces": reports, "failing": failing }))
        }
        Check::Claim => {
            let mut checks = Vec::new();
            for i in 1..=inst.s() {
                for u in 0..inst.tuples[i - 1].len() {
                    checks.push(claim_mean_check(&inst, i, u)?);
                }
            }
            let pass = checks.iter().all(|c| c.pass);
            (pass, json!({ "checks": checks }))
        }
        Check::EnergyMiddle => {
            let gaps = (1..=inst.s())
                .map(|i| verify_energy_middle(&inst, i, &budget))
                .collect::<Result<Vec<_>>>()?;
            let witnesses: Vec<usize> = gaps.iter().filter(|g| !g.pass).map(|g| g.layer).collect();
            (witnesses.is_empty(), json!({ "gaps": gaps, "witnesses": witnesses }))
        }
        Check::EnergyStart => {
            let reports = (1..inst.s())
                .map(|i| verify_energy_start(&inst, i, a.random, a.seed, &budget))
                .collect::<Result<Vec<_>>>()?;
            let pass = reports.iter().all(|r| r.pass);
            (pass, json!({ "layers": reports }))
        }
        Check::SarlPair => {
            let (j, k) = a
                .w1
                .zip(a.w2)
                .ok_or_else(|| Error::InvalidParameter("--w1 and --w2 are required".into()))?;
            let delta = a
                .delta
                .ok_or_else(|| Error::InvalidParameter("--delta is required".into()))?;
            if j > inst.s() || k > inst.s() {
                return Err(Error::InvalidParameter(format!("layers beyond s = {}", inst.s())));
            }
            let eps = EpsSchedule {
                c: a.eps_c.unwrap_or(EpsSchedule::minimal(inst.p).c),
            };
            let report = sarl_pair_check(
                &inst.f,
                &inst.h(j),
                &inst.h(k),
                delta,
                |d| eps.eps(delta, d as f64),
                &budget,
            )?;
            (report.pass, serde_json::to_value(&report)?)
        }
        Check::Schedule => unreachable!("handled above"),
    };
    let consistent = mismatches.is_empty();
    let pass = pass && consistent;
    session.write_json(
        "verify.json",
        &json!({ "check": a.which, "pass": pass, "consistent": consistent, "mismatches": mismatches, "report": body }),
    )?;
    for m in &mismatches {
        println!("inconsistent instance: {m}");
    }
    println!("pass = {pass}");
    Ok(verdict_code(pass))
}

fn schedule_inputs(p: Option<u32>, delta: Option<f64>, c: Option<u64>) -> Result<(u32, f64, EpsSchedule)> {
    let p = p.ok_or_else(|| Error::InvalidParameter("--p is required".into()))?;
    let delta = delta.ok_or_else(|| Error::InvalidParameter("--delta is required".into()))?;
    let eps = EpsSchedule {
        c: c.unwrap_or(EpsSchedule::minimal(p).c),
    };
    Ok((p, delta, eps))
}

fn verify_schedule(a: &VerifyArgs, session: &mut Session) -> Result<i32> {
    let (p, delta, eps) = schedule_inputs(a.p, a.delta, a.eps_c)?;
    let report = tower_lower_bound(p, delta, eps)?;
    let pass = report.first_step == Verdict::Proven
        && report.base_case == Verdict::Proven
        && report.steps.iter().all(|s| s.verdict == Verdict::Proven)
        && report.verdict == Verdict::Proven;
    session.write_json("verify.json", &json!({ "check": a.which, "pass": pass, "report": report }))?;
    println!("t = {}, verdict = {:?}", report.t, report.verdict);
    println!("pass = {pass}");
    Ok(verdict_code(pass))
}

pub(super) fn schedule(a: &ScheduleArgs, session: &mut Session) -> Result<i32> {
    let (p, delta, eps) = schedule_inputs(Some(a.p), Some(a.delta), a.eps_c)?;
    session.parameters = json!({ "p": p, "delta": delta, "eps_c": eps.c });
    let sched = sarl_schedule(p, delta, eps)?;
    let tower = tower_lower_bound(p, delta, eps)?;
    session.write_json("schedule.json", &json!({ "schedule": sched, "tower": tower }))?;
    println!("t = {}", sched.t);
    for level in &sched.levels {
        println!("h_{} = {}", level.i, level.h);
    }
    println!("F(t-1) > wwz(t): {:?}", tower.verdict);
    Ok(EXIT_PASS)
}

pub(super) fn qarl(a: &QarlArgs, session: &mut Session) -> Result<i32> {
    let f = read_function(&a.f, session)?;
    let mut params = match a.preset {
        GrowthPreset::PaperMin => RegularityParams::paper_min(f.p(), a.delta)?,
    };
    if let Some(s) = a.omega_scale {
        params.omega_scale = s;
    }
    if let Some(o) = a.rank_offset {
        params.rank_offset = o;
    }
    if let Some(s) = a.rank_scale {
        params.rank_scale = s;
    }
    let mut budget = session.budget;
    if let Some(q) = a.max_quadratic_parts {
        budget.max_quadratic_parts = q;
    }
    let mut config = QarlConfig::new(params, budget);
    if let Some(m) = a.max_outer {
        config.max_outer = m;
    }
    if let Some(m) = a.max_inner {
        config.max_inner = m;
    }
    session.parameters = json!({
        "params": params,
        "max_outer": config.max_outer,
        "max_inner": config.max_inner,
    });
    let out = run_qarl(&f, &config)?;
    session.write_json("factor.json", &out.factor.record())?;
    session.write_json("f_err.json", &json!({ "p": f.p(), "n": f.n(), "values": out.f_err.values() }))?;
    session.write_text("trace.jsonl", &out.trace_jsonl()?)?;
    session.write_json("qarl.json", &out)?;
    println!(
        "success = {}, D = {}, outer steps = {}",
        out.success,
        out.factor.complexity(),
        out.outer_steps
    );
    if !out.success {
        if let Some(msg) = &out.failure {
            println!("failure: {msg}");
        }
        return Ok(if out.exhausted { EXIT_RESOURCE } else { EXIT_FAIL });
    }
    if a.check_linear_layer {
        let report = linear_layer_regularity(&f, &out.factor, &params, &budget)?;
        session.write_json("linear_layer.json", &report)?;
        println!(
            "linear layer: bad fraction {} at {}, regular = {}",
            report.bad_fraction, report.threshold, report.pass
        );
        return Ok(verdict_code(report.pass));
    }
    Ok(EXIT_PASS)
}
