//! Finite-difference checks for tape primitives and the policy losses.

use kgqa::dataset::Split;
use kgqa::diffcore::gradcheck::{check_gradients, finite_difference};
use kgqa::diffcore::{Gradients, ParamSet, Tape, Tensor, Var};
use kgqa::episode::{mine_dfs, reinforce_gradient, rollout, supervised_gradient, EnvConfig, RewardConfig};
use kgqa::error::Result;
use kgqa::kg_store::{AugmentFlags, KnowledgeGraph};
use kgqa::policy::PolicyParams;
use rand::Rng;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub type Build = fn(&mut Tape<'_>, &[Var]) -> Result<Var>;

pub fn random_params(seed: u64, shapes: &[(usize, usize)]) -> ParamSet {
    let mut r = super::rng(seed);
    let mut ps = ParamSet::new();
    for (i, &(rows, cols)) in shapes.iter().enumerate() {
        let data = (0..rows * cols).map(|_| r.gen_range(-1.5..1.5)).collect();
        ps.insert(format!("p{i}"), Tensor::matrix(rows, cols, data).unwrap()).unwrap();
    }
    ps
}

/// Reduces an op output to a scalar through fixed random weights so that
/// every output entry carries a distinct upstream gradient.
pub fn weighted_sum(tape: &mut Tape<'_>, out: Var, seed: u64) -> Result<Var> {
    let (rows, cols) = tape.shape(out);
    let mut r = super::rng(seed.wrapping_add(1000));
    let w = tape.constant_matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect())?;
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

/// Largest relative error between the tape gradient and central
/// differences of `build` on random inputs drawn with `seed`.
pub fn op_error(shapes: &[(usize, usize)], build: Build, seed: u64) -> f64 {
    let params = random_params(seed, shapes);
    let loss_of = |ps: &ParamSet| -> Result<(f64, Gradients)> {
        let mut tape = Tape::new(ps);
        let vars: Vec<Var> = ps.ids().map(|id| tape.param(id)).collect::<Result<_>>()?;
        let out = build(&mut tape, &vars)?;
        let loss = weighted_sum(&mut tape, out, seed)?;
        Ok((tape.scalar(loss), tape.backward(loss)?))
    };
    let analytic = loss_of(&params).unwrap().1.flatten(&params);
    let numeric = finite_difference(&params, H, |ps| Ok(loss_of(ps)?.0)).unwrap();
    check_gradients(&analytic, &numeric).max_relative_error
}

/// Every tape primitive with the input shapes it is checked on.
pub fn primitives() -> Vec<(&'static str, Vec<(usize, usize)>, Build)> {
    vec![
        ("matmul", vec![(3, 4), (4, 2)], |t, v| t.matmul(v[0], v[1])),
        ("matmul_nt", vec![(3, 4), (5, 4)], |t, v| t.matmul_nt(v[0], v[1])),
        ("add", vec![(3, 4), (3, 4)], |t, v| t.add(v[0], v[1])),
        ("mul", vec![(3, 4), (3, 4)], |t, v| t.mul(v[0], v[1])),
        ("add(x, x)", vec![(2, 3)], |t, v| t.add(v[0], v[0])),
        ("mul(x, x)", vec![(2, 3)], |t, v| t.mul(v[0], v[0])),
        ("concat", vec![(2, 3), (2, 1), (2, 4)], |t, v| t.concat(&[v[0], v[1], v[2]])),
        // Repeated ids must accumulate into the same table row.
        ("embedding_lookup", vec![(5, 3)], |t, v| t.embedding_lookup(v[0], &[0, 2, 2, 4, 0])),
        ("repeat_rows", vec![(1, 4)], |t, v| t.repeat_rows(v[0], 3)),
        ("sigmoid", vec![(3, 4)], |t, v| Ok(t.sigmoid(v[0]))),
        ("tanh", vec![(3, 4)], |t, v| Ok(t.tanh(v[0]))),
        ("exp", vec![(3, 4)], |t, v| Ok(t.exp(v[0]))),
        ("log_softmax", vec![(3, 5)], |t, v| t.log_softmax(v[0], 5)),
        // Only valid positions enter the loss; the masked tail must not
        // leak gradient into them.
        ("masked log_softmax", vec![(1, 6)], |t, v| {
            let lp = t.log_softmax(v[0], 4)?;
            t.select(lp, &[0, 1, 2, 3])
        }),
        ("select", vec![(3, 4)], |t, v| t.select(v[0], &[0, 5, 5, 11])),
        ("sum", vec![(3, 4)], |t, v| {
            let e = t.exp(v[0]);
            Ok(t.sum(e))
        }),
        ("scale", vec![(3, 4)], |t, v| Ok(t.scale(v[0], -2.5))),
        ("tanh(a·b) ⊙ sigmoid(c)", vec![(2, 3), (3, 4), (2, 4)], |t, v| {
            let m = t.matmul(v[0], v[1])?;
            let a = t.tanh(m);
            let s = t.sigmoid(v[2]);
            t.mul(a, s)
        }),
    ]
}

/// A random 8-entity graph with a d = 4, H = 8 policy far from uniform.
pub fn policy_fixture(seed: u64) -> (KnowledgeGraph, PolicyParams, EnvConfig) {
    let mut r = super::rng(seed);
    let g = super::random_graph(&mut r, 8, 3, 18, AugmentFlags::ALL);
    let params = super::random_policy(super::config_for(&g, 4, 8), seed, 0.8);
    (g, params, EnvConfig { path_length: 3, max_out: 200 })
}

fn with_params(template: &PolicyParams, ps: &ParamSet) -> PolicyParams {
    PolicyParams::from_params(*template.config(), ps.clone()).unwrap()
}

/// Relative gradient error of the REINFORCE loss (ternary rewards, fixed
/// per-row baselines, entropy bonus) and the largest analytic entry.
pub fn reinforce_error(seed: u64) -> (f64, f64) {
    let (g, params, env) = policy_fixture(seed);
    let mut r = super::rng(seed + 50);
    let rewards = RewardConfig::ternary(10.0, -0.1);
    let mut batch = Vec::new();
    for _ in 0..3 {
        let q = super::random_query(&mut r, 8, 3, Split::Train);
        batch.extend(rollout(&g, &params, &q, &env, &rewards, 2, &mut r).unwrap());
    }
    let baselines: Vec<f64> = (0..batch.len()).map(|i| 0.3 * i as f64 - 1.0).collect();
    let start = g.layout().start();
    let (grads, _) = reinforce_gradient(&params, &batch, &baselines, 0.05, start).unwrap();
    let analytic = grads.flatten(params.params());
    let numeric = finite_difference(params.params(), H, |ps| {
        Ok(reinforce_gradient(&with_params(&params, ps), &batch, &baselines, 0.05, start)?.1.loss)
    })
    .unwrap();
    let largest = analytic.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (check_gradients(&analytic, &numeric).max_relative_error, largest)
}

/// Relative gradient error of the supervised path loss on mined targets.
pub fn supervised_error(seed: u64) -> f64 {
    let (g, params, env) = policy_fixture(seed);
    let mut r = super::rng(seed + 70);
    let mut examples = Vec::new();
    for _ in 0..4 {
        let q = super::random_query(&mut r, 8, 3, Split::Train);
        examples.extend(mine_dfs(&g, &q, &env, Some(2), &mut r));
    }
    assert!(!examples.is_empty());
    let (grads, _) = supervised_gradient(&g, &params, &examples, &env).unwrap();
    let analytic = grads.flatten(params.params());
    let numeric = finite_difference(params.params(), H, |ps| {
        Ok(supervised_gradient(&g, &with_params(&params, ps), &examples, &env)?.1.loss)
    })
    .unwrap();
    check_gradients(&analytic, &numeric).max_relative_error
}
