use super::*;
use proptest::prelude::*;

fn row(client: usize, rhs: f64, coeffs: &[(u32, f64)]) -> CutRow {
    CutRow {
        client,
        rhs,
        coeffs: coeffs.to_vec(),
    }
}

fn model(n_sites: usize, n_clients: usize, p: usize, rows: &[CutRow]) -> LpModel {
    let mut m = LpModel::new(n_sites, n_clients, p);
    for r in rows {
        m.add_row(r.clone()).unwrap();
    }
    m
}

/// Brute-force LP optimum: every basic solution of the constraint system in
/// `(y, theta)` space, checked for feasibility. `None` when infeasible.
fn vertex_optimum(m: &LpModel) -> Option<f64> {
    let (ns, nc) = (m.n_sites(), m.n_clients());
    let n = ns + nc;
    // constraints as (a, b, kind): kind 0 equality, 1 means a.x >= b
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut eq = vec![0.0; n];
    eq[..ns].iter_mut().for_each(|v| *v = 1.0);
    for r in m.cut_rows() {
        let mut a = vec![0.0; n];
        a[ns + r.client] = 1.0;
        for &(j, c) in &r.coeffs {
            a[j as usize] += c;
        }
        cons.push((a, r.rhs));
    }
    for j in 0..ns {
        let (lo, up) = m.y_bounds(j);
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        cons.push((a.clone(), lo));
        a[j] = -1.0;
        cons.push((a, -up));
    }
    for i in 0..nc {
        let mut a = vec![0.0; n];
        a[ns + i] = 1.0;
        cons.push((a, 0.0));
    }
    let feasible = |x: &[f64]| {
        let s: f64 = x[..ns].iter().sum();
        (s - m.p()).abs() < 1e-7
            && cons
                .iter()
                .all(|(a, b)| a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() >= b - 1e-7)
    };
    let mut best: Option<f64> = None;
    let k = n - 1;
    let mut pick: Vec<usize> = (0..k).collect();
    if k > cons.len() {
        return None;
    }
    loop {
        let mut mat = vec![eq.clone()];
        let mut rhs = vec![m.p()];
        for &c in &pick {
            mat.push(cons[c].0.clone());
            rhs.push(cons[c].1);
        }
        if let Some(x) = gauss(mat, rhs) {
            if feasible(&x) {
                let obj: f64 = x[ns..].iter().sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination
        let mut t = k;
        loop {
            if t == 0 {
                return best;
            }
            t -= 1;
            if pick[t] < cons.len() - k + t {
                pick[t] += 1;
                for u in t + 1..k {
                    pick[u] = pick[u - 1] + 1;
                }
                break;
            }
        }
    }
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap())?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn check_certificate(m: &LpModel, sol: &LpSolution) {
    assert_eq!(sol.status, LpStatus::Optimal);
    let sum: f64 = sol.y.iter().sum();
    assert!((sum - m.p()).abs() < PRIMAL_TOL * 10.0);
    for (t, r) in m.cut_rows().iter().enumerate() {
        let act = sol.theta[r.client] + r.coeffs.iter().map(|&(j, c)| c * sol.y[j as usize]).sum::<f64>();
        assert!(act >= r.rhs - 1e-6, "row {t} violated");
        let dual = sol.row_duals[t + 1];
        assert!(dual >= -DUAL_TOL, "negative cut dual {dual}");
        assert!(dual * (act - r.rhs) < 1e-6, "complementary slackness on row {t}");
    }
    // Duals reproduce the objective.
    let mut dual_obj = sol.row_duals[0] * m.p();
    for (t, r) in m.cut_rows().iter().enumerate() {
        dual_obj += sol.row_duals[t + 1] * r.rhs;
    }
    for j in 0..m.n_sites() {
        let (lo, up) = m.y_bounds(j);
        let rc = sol.reduced_costs_y[j];
        match sol.y_status[j] {
            VarStatus::AtLower => {
                assert!(rc >= -DUAL_TOL || lo == up, "rc {rc} at lower bound");
                dual_obj += rc * lo;
            }
            VarStatus::AtUpper => {
                assert!(rc <= DUAL_TOL || lo == up, "rc {rc} at upper bound");
                dual_obj += rc * up;
            }
            VarStatus::Basic => assert!(rc.abs() < 1e-9),
        }
    }
    for &rc in &sol.reduced_costs_theta {
        assert!(rc >= -DUAL_TOL);
    }
    assert!((dual_obj - sol.objective).abs() < 1e-6, "dual {dual_obj} vs primal {}", sol.objective);
}

#[test]
fn no_cuts_gives_zero() {
    let m = LpModel::new(4, 3, 2);
    let sol = lp_solve(&m, None).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert_eq!(sol.objective, 0.0);
    assert!(sol.theta.iter().all(|&t| t == 0.0));
    assert!((sol.y.iter().sum::<f64>() - 2.0).abs() < 1e-12);
}

#[test]
fn three_site_example() {
    let rows = [
        row(0, 4.0, &[(0, 4.0)]),
        row(1, 4.0, &[(1, 4.0)]),
        row(2, 3.0, &[(2, 3.0)]),
    ];
    let m = model(3, 3, 1, &rows);
    let sol = lp_solve(&m, None).unwrap();
    let oracle = vertex_optimum(&m).unwrap();
    assert!((sol.objective - oracle).abs() < 1e-9, "{} vs {oracle}", sol.objective);
    check_certificate(&m, &sol);
}

#[test]
fn warm_start_is_a_fixed_point() {
    let rows = [
        row(0, 4.0, &[(0, 4.0)]),
        row(0, 7.0, &[(0, 7.0), (1, 3.0)]),
        row(1, 4.0, &[(1, 4.0)]),
        row(2, 3.0, &[(2, 3.0)]),
        row(2, 7.0, &[(2, 7.0), (1, 4.0)]),
    ];
    let m = model(3, 3, 1, &rows);
    let first = lp_solve(&m, None).unwrap();
    let again = lp_solve(&m, Some(&first.basis)).unwrap();
    assert!((first.objective - again.objective).abs() < 1e-12);
    assert!(again.iterations <= 1);
}

#[test]
fn incremental_rows_match_scratch_solve() {
    let mut s = Simplex::new(LpModel::new(3, 3, 1));
    s.solve().unwrap();
    s.add_rows([row(0, 4.0, &[(0, 4.0)]), row(2, 7.0, &[(2, 7.0), (1, 4.0)])]).unwrap();
    s.solve().unwrap();
    s.add_rows([row(1, 4.0, &[(1, 4.0)]), row(2, 3.0, &[(2, 3.0)])]).unwrap();
    let warm = s.solve().unwrap();
    let cold = lp_solve(s.model(), None).unwrap();
    assert!((warm.objective - cold.objective).abs() < 1e-9);
    check_certificate(s.model(), &warm);
}

#[test]
fn fixing_forces_the_site() {
    let rows = [
        row(0, 4.0, &[(0, 4.0)]),
        row(1, 4.0, &[(1, 4.0)]),
        row(2, 3.0, &[(2, 3.0)]),
    ];
    let m = model(3, 3, 1, &rows);
    let fixed = m.fix_variable(1, 1).unwrap();
    let sol = lp_solve(&fixed, None).unwrap();
    assert_eq!(sol.y, vec![0.0, 1.0, 0.0]);
    assert!((sol.objective - 7.0).abs() < 1e-9);
    // the parent is untouched
    assert_eq!(m.y_bounds(1), (0.0, 1.0));
}

#[test]
fn fixing_everything_to_zero_is_infeasible() {
    let mut m = LpModel::new(3, 1, 1);
    m.add_row(row(0, 2.0, &[(0, 2.0)])).unwrap();
    for j in 0..3 {
        m = m.fix_variable(j, 0).unwrap();
    }
    let sol = lp_solve(&m, None).unwrap();
    assert_eq!(sol.status, LpStatus::Infeasible);
}

#[test]
fn contradictory_fixing_is_an_error() {
    let m = LpModel::new(2, 1, 1).fix_variable(0, 1).unwrap();
    assert!(matches!(m.fix_variable(0, 0), Err(LpError::InfeasibleFixing { site: 0, .. })));
    assert!(m.fix_variable(0, 1).is_ok());
}

#[test]
fn retain_rows_drops_constraints() {
    let mut s = Simplex::new(model(
        2,
        1,
        1,
        &[row(0, 5.0, &[(0, 5.0)]), row(0, 3.0, &[(1, 3.0)])],
    ));
    let full = s.solve().unwrap();
    s.retain_rows(&[false, true]);
    let reduced = s.solve().unwrap();
    assert!(reduced.objective <= full.objective + 1e-12);
    assert_eq!(reduced.objective, 0.0);
}

fn arb_model() -> impl Strategy<Value = LpModel> {
    (2usize..=5, 1usize..=3).prop_flat_map(|(ns, nc)| {
        let rows = prop::collection::vec(
            (
                0..nc,
                1u32..20,
                prop::collection::vec((0..ns as u32, 1u32..20), 0..=ns),
            ),
            0..=(8 - ns - nc).max(1) + 2,
        );
        let fix = prop::collection::vec(prop::option::weighted(0.15, 0u8..=1), ns);
        (Just(ns), Just(nc), 1..ns, rows, fix).prop_map(|(ns, nc, p, rows, fix)| {
            let mut m = LpModel::new(ns, nc, p);
            for (client, rhs, coeffs) in rows {
                let mut cs: Vec<(u32, f64)> = Vec::new();
                for (j, c) in coeffs {
                    if !cs.iter().any(|&(k, _)| k == j) {
                        cs.push((j, f64::from(c.min(rhs))));
                    }
                }
                cs.sort_by_key(|&(j, _)| j);
                m.add_row(CutRow {
                    client,
                    rhs: f64::from(rhs),
                    coeffs: cs,
                })
                .unwrap();
            }
            for (j, f) in fix.into_iter().enumerate() {
                if let Some(v) = f {
                    m.fix_in_place(j, v).unwrap();
                }
            }
            m
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_vertex_enumeration(m in arb_model()) {
        let sol = lp_solve(&m, None).unwrap();
        match vertex_optimum(&m) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - v).abs() < 1e-7, "lp {} oracle {}", sol.objective, v);
                check_certificate(&m, &sol);
                let again = lp_solve(&m, Some(&sol.basis)).unwrap();
                prop_assert!((again.objective - sol.objective).abs() < 1e-9);
                prop_assert!(again.iterations <= 1);
            }
        }
    }

    #[test]
    fn adding_rows_never_lowers_the_objective(m in arb_model(), split in 0usize..10) {
        let rows = m.cut_rows().to_vec();
        let split = split.min(rows.len());
        let mut base = m.clone();
        base.retain_rows(|r, _| r < split);
        let mut s = Simplex::new(base);
        let before = s.solve().unwrap();
        s.add_rows(rows[split..].iter().map(|r| (**r).clone())).unwrap();
        let after = s.solve().unwrap();
        if before.status == LpStatus::Optimal && after.status == LpStatus::Optimal {
            prop_assert!(after.objective >= before.objective - 1e-9);
        }
        let scratch = lp_solve(&m, None).unwrap();
        prop_assert_eq!(scratch.status, after.status);
        if scratch.status == LpStatus::Optimal {
            prop_assert!((scratch.objective - after.objective).abs() < 1e-7);
        }
    }
}
