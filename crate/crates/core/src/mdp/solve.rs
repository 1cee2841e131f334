use rand::Rng;

use super::{FiniteMdp, QTable, StationaryPolicy};
use crate::error::{Error, Result};

/// Default solver tolerance on the final Bellman residual.
pub const DEFAULT_TOL: f64 = 1e-6;

// Guards against floating-point stalls when the stopping threshold falls
// below the ulp of the values.
const MAX_SWEEPS: usize = 1_000_000;

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "tol",
            format!("must be positive and finite, got {tol}"),
        ))
    }
}

fn optimal_backup_into(mdp: &FiniteMdp, q: &QTable, v: &mut [f64], out: &mut QTable) {
    for (s, vs) in v.iter_mut().enumerate() {
        *vs = q.row_max(s);
    }
    expected_backup_into(mdp, v, out);
}

fn policy_backup_into(
    mdp: &FiniteMdp,
    pol: &StationaryPolicy,
    q: &QTable,
    v: &mut [f64],
    out: &mut QTable,
) {
    for (s, vs) in v.iter_mut().enumerate() {
        *vs = pol.row(s).iter().zip(q.row(s)).map(|(p, q)| p * q).sum();
    }
    expected_backup_into(mdp, v, out);
}

#[inline]
fn expected_backup_into(mdp: &FiniteMdp, v: &[f64], out: &mut QTable) {
    let gamma = mdp.discount();
    let rewards = mdp.reward_means();
    for ((pair, row), o) in mdp
        .transitions()
        .chunks_exact(mdp.n_states())
        .enumerate()
        .zip(out.values_mut())
    {
        let ev: f64 = row.iter().zip(v).map(|(p, v)| p * v).sum();
        *o = rewards[pair] + gamma * ev;
    }
}

/// One application of the Bellman optimality operator.
pub fn bellman_optimal_backup(mdp: &FiniteMdp, q: &QTable) -> Result<QTable> {
    q.check_shape(mdp.n_states(), mdp.n_actions())?;
    let mut out = QTable::for_mdp(mdp);
    let mut v = vec![0.0; mdp.n_states()];
    optimal_backup_into(mdp, q, &mut v, &mut out);
    Ok(out)
}

/// One application of the policy-evaluation operator for `pol`.
pub fn policy_backup(mdp: &FiniteMdp, pol: &StationaryPolicy, q: &QTable) -> Result<QTable> {
    q.check_shape(mdp.n_states(), mdp.n_actions())?;
    check_policy_shape(mdp, pol)?;
    let mut out = QTable::for_mdp(mdp);
    let mut v = vec![0.0; mdp.n_states()];
    policy_backup_into(mdp, pol, q, &mut v, &mut out);
    Ok(out)
}

fn check_policy_shape(mdp: &FiniteMdp, pol: &StationaryPolicy) -> Result<()> {
    if pol.n_states() == mdp.n_states() && pol.n_actions() == mdp.n_actions() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: format!("{}x{} policy", mdp.n_states(), mdp.n_actions()),
            got: format!("{}x{}", pol.n_states(), pol.n_actions()),
        })
    }
}

/// Iterates `backup` from `init` until the sup-norm change is at most
/// `tol (1 - γ) / γ`, which bounds the final residual by `tol`.
fn iterate<F>(mdp: &FiniteMdp, init: QTable, tol: f64, mut backup: F) -> QTable
where
    F: FnMut(&QTable, &mut [f64], &mut QTable),
{
    let gamma = mdp.discount();
    let threshold = if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / gamma
    };
    let mut cur = init;
    let mut next = QTable::for_mdp(mdp);
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..MAX_SWEEPS {
        backup(&cur, &mut v, &mut next);
        let change = next.sup_distance(&cur);
        std::mem::swap(&mut cur, &mut next);
        if change <= threshold {
            break;
        }
    }
    cur
}

/// A constant table at or above every value reachable by the operators, so
/// iteration from it decreases monotonically.
fn upper_start(mdp: &FiniteMdp) -> QTable {
    let (_, r_max) = mdp.reward_range();
    QTable::filled(
        mdp.n_states(),
        mdp.n_actions(),
        r_max / (1.0 - mdp.discount()) + 1.0,
    )
}

/// Optimal Q-values to within `tol` of the Bellman residual.
///
/// Iteration starts from a constant upper bound and therefore approaches
/// `Q*` from above: the result `q` satisfies `B(q) <= q` entrywise.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<QTable> {
    value_iteration_from(mdp, upper_start(mdp), tol)
}

/// Value iteration warm-started from `init`.
pub fn value_iteration_from(mdp: &FiniteMdp, init: QTable, tol: f64) -> Result<QTable> {
    check_tol(tol)?;
    init.check_shape(mdp.n_states(), mdp.n_actions())?;
    Ok(iterate(mdp, init, tol, |q, v, out| {
        optimal_backup_into(mdp, q, v, out)
    }))
}

/// `Q^π` to within `tol` of the policy Bellman residual.
pub fn policy_evaluation(mdp: &FiniteMdp, pol: &StationaryPolicy, tol: f64) -> Result<QTable> {
    policy_evaluation_from(mdp, pol, upper_start(mdp), tol)
}

/// Policy evaluation warm-started from `init`.
///
/// Starting from a table `q` with `B(q) <= q` (any output of
/// [`value_iteration`]) the iterates stay below `q` entrywise.
pub fn policy_evaluation_from(
    mdp: &FiniteMdp,
    pol: &StationaryPolicy,
    init: QTable,
    tol: f64,
) -> Result<QTable> {
    check_tol(tol)?;
    check_policy_shape(mdp, pol)?;
    init.check_shape(mdp.n_states(), mdp.n_actions())?;
    Ok(iterate(mdp, init, tol, |q, v, out| {
        policy_backup_into(mdp, pol, q, v, out)
    }))
}

/// Index of the largest entry; exact ties are broken uniformly with `rng`.
///
/// `rng` is consumed only when a tie occurs.
pub fn greedy_action<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut n_best = 0usize;
    let mut first = 0usize;
    for (a, &v) in row.iter().enumerate() {
        if v > best {
            best = v;
            n_best = 1;
            first = a;
        } else if v == best {
            n_best += 1;
        }
    }
    if n_best <= 1 {
        return first;
    }
    let pick = rng.random_range(0..n_best);
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(a, _)| a)
        .unwrap_or(first)
}

/// Deterministic greedy policy on `q`, ties broken uniformly per state.
pub fn greedy_policy<R: Rng + ?Sized>(q: &QTable, rng: &mut R) -> StationaryPolicy {
    let actions: Vec<usize> = (0..q.n_states())
        .map(|s| greedy_action(q.row(s), rng))
        .collect();
    StationaryPolicy::deterministic(q.n_actions(), &actions).expect("greedy actions are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::tests::one_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backup_single_state() {
        let mdp = one_state(&[1.0], 0.99);
        let q0 = QTable::zeros(1, 1);
        assert_eq!(bellman_optimal_backup(&mdp, &q0).unwrap().get(0, 0), 1.0);
        let q100 = QTable::filled(1, 1, 100.0);
        let out = bellman_optimal_backup(&mdp, &q100).unwrap();
        assert!((out.get(0, 0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn backup_rejects_shape_mismatch() {
        let mdp = one_state(&[1.0], 0.99);
        assert!(bellman_optimal_backup(&mdp, &QTable::zeros(2, 1)).is_err());
    }

    #[test]
    fn backup_two_state_cycle_matches_hand_expansion() {
        // s0 -> s1 -> s0, r = (0, 1), γ = 0.5. From q = 0: out = r.
        // From q = r: out = (0 + 0.5 * 1, 1 + 0.5 * 0) = (0.5, 1).
        let mdp = FiniteMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 1.0], 0.5).unwrap();
        let q1 = bellman_optimal_backup(&mdp, &QTable::zeros(2, 1)).unwrap();
        assert_eq!(q1.values(), &[0.0, 1.0]);
        let q2 = bellman_optimal_backup(&mdp, &q1).unwrap();
        assert_eq!(q2.values(), &[0.5, 1.0]);
        // Fixed point: Q0 = 0.5 Q1, Q1 = 1 + 0.5 Q0 -> Q0 = 2/3, Q1 = 4/3.
        let q = value_iteration(&mdp, 1e-9).unwrap();
        assert!((q.get(0, 0) - 2.0 / 3.0).abs() < 1e-8);
        assert!((q.get(1, 0) - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn value_iteration_geometric_series() {
        let q = value_iteration(&one_state(&[1.0], 0.99), 1e-6).unwrap();
        assert!((q.get(0, 0) - 100.0).abs() <= 1e-6);
        let q = value_iteration(&one_state(&[0.0, 1.0], 0.99), 1e-6).unwrap();
        assert!((q.get(0, 0) - 99.0).abs() <= 1e-6);
        assert!((q.get(0, 1) - 100.0).abs() <= 1e-6);
    }

    #[test]
    fn value_iteration_zero_discount_is_reward() {
        let q = value_iteration(&one_state(&[0.3, -2.0], 0.0), 1e-6).unwrap();
        assert_eq!(q.values(), &[0.3, -2.0]);
    }

    #[test]
    fn value_iteration_rejects_bad_tol() {
        let mdp = one_state(&[1.0], 0.9);
        assert!(value_iteration(&mdp, 0.0).is_err());
        assert!(value_iteration(&mdp, f64::NAN).is_err());
    }

    #[test]
    fn policy_evaluation_uniform_single_state() {
        let mdp = one_state(&[0.0, 1.0], 0.99);
        let q = policy_evaluation(&mdp, &StationaryPolicy::uniform(1, 2), 1e-6).unwrap();
        assert!((q.get(0, 0) - 49.5).abs() <= 1e-6);
        assert!((q.get(0, 1) - 50.5).abs() <= 1e-6);
    }

    #[test]
    fn greedy_picks_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(greedy_action(&[1.0, 2.0, 3.0], &mut rng), 2);
        assert_eq!(greedy_action(&[-1.0, -2.0], &mut rng), 0);
        assert_eq!(greedy_action(&[0.0, 7.0], &mut rng), 1);
    }

    #[test]
    fn greedy_ties_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let ones = (0..n)
            .filter(|_| greedy_action(&[5.0, 5.0], &mut rng) == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn greedy_policy_is_deterministic_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = QTable::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.0, -1.0, -5.0]).unwrap();
        let pol = greedy_policy(&q, &mut rng);
        assert_eq!(pol.deterministic_action(0), Some(2));
        assert_eq!(pol.deterministic_action(1), Some(0));
    }
}
