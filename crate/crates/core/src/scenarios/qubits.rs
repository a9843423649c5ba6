use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{complex_cells, complex_columns, linspace, logspace, Cell, Ctx, Table, Verdict};
use crate::coupling::{causality_scenario, modular_sum_measure, weak_couple_and_postselect, weak_readout, CouplingSpec};
use crate::error::Result;
use crate::hilbert::{sigma_x, sigma_z, HermitianOperator, StateVector, C64};
use crate::pointer::GaussianMixture;
use crate::tsvf::{abl_probabilities, pp_expectation, weak_value, TwoStateVector};

/// Table of `|ψ|²` on a grid covering all term centers plus six widths.
pub(crate) fn density_table(mix: &GaussianMixture, points: usize) -> Table {
    let (lo, hi) = mix.center_range(0);
    let s = mix.width(0);
    let mut t = Table::new(&["q", "density"]);
    for q in linspace(lo - 6.0 * s, hi + 6.0 * s, points) {
        t.push(vec![q.into(), mix.density_at(&[q]).into()]);
    }
    t
}

pub(crate) fn fig1_spin100(ctx: &mut Ctx) -> Result<()> {
    let p = &ctx.params;
    let eps = p.float("tan_eps")?.atan();
    let pre = StateVector::basis(vec![2], &[0])?;
    let post = StateVector::new(vec![2], vec![C64::new(eps.sin(), 0.0), C64::new(eps.cos(), 0.0)])?;
    let tsv = TwoStateVector::new(pre, post)?;
    let x = sigma_x();
    let pointer = |d: f64| weak_couple_and_postselect(&tsv, &CouplingSpec::local_single(x.clone(), d)?);
    // Two-term mixture with overlap exp(−1/(2Δ²)).
    let closed = |d: f64| (2.0 * eps).sin() / (1.0 - (2.0 * eps).cos() * (-1.0 / (2.0 * d * d)).exp());

    let r = &mut ctx.report;
    let w = weak_value(&tsv, &x)?;
    r.verdict(Verdict::close("weak_value@sigma_x", ctx.reference.float("weak_value")?, w.re, 1e-12));
    let mut wt = Table::new(&["observable", "re", "im"]);
    wt.push(vec!["sigma_x".into(), w.re.into(), w.im.into()]);
    r.table("weak_value", wt);

    let mut t = Table::new(&["delta", "qexp", "closed_form", "readout_im"]);
    for d in p.floats("deltas")? {
        let m = pointer(d)?;
        t.push(vec![d.into(), m.mean(0).into(), closed(d).into(), weak_readout(&m, d)?.im.into()]);
    }
    r.table("qexp_vs_delta", t);

    let mut t = Table::new(&["delta", "qexp", "readout_im"]);
    for d in logspace(p.float("sweep_lo")?, p.float("sweep_hi")?, p.count("sweep_points")?) {
        let m = pointer(d)?;
        t.push(vec![d.into(), m.mean(0).into(), weak_readout(&m, d)?.im.into()]);
    }
    r.table("qexp_sweep", t);

    for d in p.floats("density_deltas")? {
        r.table(format!("density_delta_{d}"), density_table(&pointer(d)?, p.count("density_points")?));
    }

    let tol = ctx.reference.float("tol")?;
    for (d, want) in ctx.reference.floats("deltas")?.into_iter().zip(ctx.reference.floats("qexp")?) {
        r.verdict(Verdict::within(format!("pointer_mean@delta={d}"), want, pointer(d)?.mean(0), tol));
    }
    r.note(format!(
        "Exact pointer mean at width 5 is {:.4}; the reference value 5 is rounded.",
        closed(5.0)
    ));
    Ok(())
}

/// Outcome probabilities by summing `Φ*_k Ψ_k` over the basis states `k`
/// in each outcome class and normalizing.
fn enumerate(tsv: &TwoStateVector, class_of: impl Fn(usize) -> usize, classes: usize) -> Vec<f64> {
    let mut amp = vec![C64::new(0.0, 0.0); classes];
    let (pre, post) = (tsv.pre().amplitudes(), tsv.post().amplitudes());
    for k in 0..pre.len() {
        amp[class_of(k)] += post[k].conj() * pre[k];
    }
    let total: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
    amp.iter().map(|a| a.norm_sqr() / total).collect()
}

fn abl_map(tsv: &TwoStateVector, c: &HermitianOperator) -> Result<Vec<(f64, f64)>> {
    Ok(abl_probabilities(tsv, c)?.into_iter().map(|o| (o.eigenvalue, o.probability)).collect())
}

fn prob_of(outcomes: &[(f64, f64)], value: f64) -> f64 {
    outcomes.iter().filter(|(v, _)| (v - value).abs() < 1e-9).map(|(_, p)| p).sum()
}

pub(crate) fn sec5_abl(ctx: &mut Ctx) -> Result<()> {
    let dims = [2usize, 2];
    let za = sigma_z().embed(&dims, 0)?;
    let zb = sigma_z().embed(&dims, 1)?;
    let sum = za.add(&zb)?;
    // Distinct eigenvalues for the four joint local outcomes: ↑↑ 3, ↑↓ −1, ↓↑ 1, ↓↓ −3.
    let joint = za.add(&zb.scale(2.0))?;
    let tol = ctx.reference.float("tol")?;
    let want_plus2 = ctx.reference.float("prob_sum_plus2")?;
    let bit = |k: usize, q: usize| (k >> (1 - q)) & 1;

    let mut nonlocal = Table::new(&["eps", "p_minus2", "p_0", "p_plus2", "expectation"]);
    let mut local_a = Table::new(&["eps", "p_up", "p_down", "closed_form_p_down", "enumerated_p_down"]);
    let mut local_b = Table::new(&["eps", "p_up", "p_down", "enumerated_p_down"]);
    let mut joint_t =
        Table::new(&["eps", "p_uu", "p_ud", "p_du", "p_dd", "closed_form_p_uu", "sum_expectation", "closed_form_sum_expectation"]);
    let r = &mut ctx.report;
    let mut skipped = Vec::new();
    for e in ctx.params.floats("eps_values")? {
        let tsv = crate::systems::abl_example(e)?;
        match abl_map(&tsv, &sum) {
            Ok(o) => {
                let (m2, z, p2) = (prob_of(&o, -2.0), prob_of(&o, 0.0), prob_of(&o, 2.0));
                nonlocal.push(vec![e.into(), m2.into(), z.into(), p2.into(), pp_expectation(&tsv, &sum)?.into()]);
                r.verdict(Verdict::within(format!("abl_probability@sum=+2,eps={e}"), want_plus2, p2, tol));
            }
            Err(crate::Error::PostSelectionImpossible) => skipped.push(e),
            Err(err) => return Err(err),
        }

        let e2 = e * e;
        let oa = abl_map(&tsv, &za)?;
        let ea = enumerate(&tsv, |k| bit(k, 0), 2);
        let closed_a = 1.0 / (2.0 + 2.0 * e2 + e2 * e2);
        let pa = prob_of(&oa, -1.0);
        local_a.push(vec![e.into(), prob_of(&oa, 1.0).into(), pa.into(), closed_a.into(), ea[1].into()]);
        r.verdict(Verdict::within(format!("abl_closed_form@local_a,eps={e}"), closed_a, pa, tol));
        r.verdict(Verdict::within(format!("abl_enumeration@local_a,eps={e}"), ea[1], pa, tol));

        let ob = abl_map(&tsv, &zb)?;
        let eb = enumerate(&tsv, |k| bit(k, 1), 2);
        let pb = prob_of(&ob, -1.0);
        local_b.push(vec![e.into(), prob_of(&ob, 1.0).into(), pb.into(), eb[1].into()]);
        r.verdict(Verdict::within(format!("abl_enumeration@local_b,eps={e}"), eb[1], pb, tol));

        let oj = abl_map(&tsv, &joint)?;
        let ej = enumerate(&tsv, |k| k, 4);
        let pj = [prob_of(&oj, 3.0), prob_of(&oj, -1.0), prob_of(&oj, 1.0), prob_of(&oj, -3.0)];
        let closed_uu = e2 * e2 / (2.0 + e2 * e2);
        let expectation = 2.0 * pj[0] - 2.0 * pj[3];
        joint_t.push(vec![
            e.into(),
            pj[0].into(),
            pj[1].into(),
            pj[2].into(),
            pj[3].into(),
            closed_uu.into(),
            expectation.into(),
            (2.0 * closed_uu).into(),
        ]);
        let dev = pj.iter().zip(&ej).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.verdict(Verdict::within(format!("abl_enumeration@joint,eps={e}"), 0.0, dev, tol));
        r.verdict(Verdict::within(format!("abl_closed_form@joint_uu,eps={e}"), closed_uu, pj[0], tol));
    }
    r.table("abl_nonlocal", nonlocal);
    r.table("abl_local_a", local_a);
    r.table("abl_local_b", local_b);
    r.table("abl_joint", joint_t);
    for e in skipped {
        r.note(format!("eps = {e}: pre- and post-selection are orthogonal, so the non-local ABL row is undefined and omitted."));
    }
    r.note(
        "Reference closed forms for the local-A and joint probabilities do not follow from the stated states; \
         the tables use values derived from the states, P(A=down) = 1/(2+2e^2+e^4) and P(up,up) = e^4/(2+e^4), \
         both confirmed by direct enumeration.",
    );
    Ok(())
}

pub(crate) fn causality(ctx: &mut Ctx) -> Result<()> {
    let tol = ctx.reference.float("tol")?;
    let mut t = Table::new(&["bob_flips", "alice_probability"]);
    for (flip, key) in [(false, "no_flip"), (true, "flip")] {
        let p = causality_scenario(flip);
        t.push(vec![flip.into(), p.into()]);
        ctx.report.verdict(Verdict::within(format!("causality_probability@bob_flips={flip}"), ctx.reference.float(key)?, p, tol));
    }
    ctx.report.table("alice_probability", t);
    Ok(())
}

/// `½‖ρ − σ‖₁` for Hermitian matrices on two qubits.
pub(crate) fn trace_distance(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> Result<f64> {
    let diff = HermitianOperator::new(vec![2, 2], rho - sigma)?;
    Ok(diff.eigenspaces().iter().map(|e| e.value.abs() * e.rank as f64).sum::<f64>() / 2.0)
}

/// Ancilla density conditioned on the system being in the basis states `members`.
fn conditional_ancilla(state: &StateVector, members: &[usize]) -> Option<DMatrix<C64>> {
    let a = state.amplitudes();
    let mut rho = DMatrix::<C64>::zeros(4, 4);
    for &ab in members {
        for x in 0..4 {
            for y in 0..4 {
                rho[(x, y)] += a[ab * 4 + x] * a[ab * 4 + y].conj();
            }
        }
    }
    let tr = rho.trace().re;
    (tr > 1e-15).then(|| rho / C64::new(tr, 0.0))
}

const CLASS_MEMBERS: [(u8, [usize; 2]); 2] = [(0, [1, 2]), (2, [0, 3])];

fn class_of(ab: usize) -> u8 {
    if ab == 1 || ab == 2 {
        0
    } else {
        2
    }
}

pub(crate) fn modular_sum(ctx: &mut Ctx) -> Result<()> {
    let tol = ctx.reference.float("tol")?;
    let labels = ["uu", "ud", "du", "dd"];
    let mut cols: Vec<String> = vec!["input".into(), "class".into()];
    for l in labels {
        cols.extend(complex_columns(&format!("ancilla_{l}")));
    }
    let mut t = Table::new(&cols);
    let mut refs: Vec<DMatrix<C64>> = Vec::new();
    for (ab, label) in labels.iter().enumerate() {
        let res = modular_sum_measure(&StateVector::basis(vec![2, 2], &[ab >> 1, ab & 1])?)?;
        refs.push(res.ancilla_density.clone());
        let branch = &res.classes[&class_of(ab)];
        let mut row: Vec<Cell> = vec![(*label).into(), (class_of(ab) as usize).into()];
        for &a in branch.ancilla.amplitudes().iter() {
            row.extend(complex_cells(a));
        }
        t.push(row);
    }
    ctx.report.table("parity_classes", t);

    let same = trace_distance(&refs[1], &refs[2])?.max(trace_distance(&refs[0], &refs[3])?);
    ctx.report.verdict(Verdict::within("parity_class_ancilla@basis", 0.0, same, tol));
    let across = trace_distance(&refs[0], &refs[1])?;
    ctx.report.verdict(Verdict::within("parity_class_distinct@basis", 1.0, across, tol));

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut t = Table::new(&["index", "p_class0", "p_class2", "max_distance_to_basis", "class_distinguishability"]);
    let mut worst: f64 = 0.0;
    let mut worst_split: f64 = 0.0;
    for i in 0..ctx.params.count("random_inputs")? {
        let amps: Vec<C64> = (0..4).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let res = modular_sum_measure(&StateVector::new(vec![2, 2], amps)?)?;
        let mut dist: f64 = 0.0;
        let mut probs = [0.0; 2];
        for (slot, (class, members)) in CLASS_MEMBERS.iter().enumerate() {
            if let Some(rho) = conditional_ancilla(&res.state, members) {
                dist = dist.max(trace_distance(&rho, &refs[members[0]])?);
            }
            probs[slot] = res.classes.get(class).map_or(0.0, |b| b.probability);
        }
        let split = res.class_distinguishability();
        worst = worst.max(dist);
        worst_split = worst_split.max((split - 1.0).abs());
        t.push(vec![i.into(), probs[0].into(), probs[1].into(), dist.into(), split.into()]);
    }
    ctx.report.table("random_inputs", t);
    ctx.report.verdict(Verdict::within("parity_class_ancilla@random", 0.0, worst, tol));
    ctx.report.verdict(Verdict::holds(
        "parity_class_distinct@random",
        "conditional ancilla states of the two classes are orthogonal",
        json!(1.0 - worst_split),
        worst_split <= tol,
    ));
    Ok(())
}
