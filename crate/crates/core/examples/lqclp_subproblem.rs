//! The trust-region subproblem with one linear constraint, solved in closed
//! form, in each of its regimes; then a two-constraint instance through the
//! dual.

use cpo::lqclp::{kkt_residuals, solve_dual_multi, solve_single, LqclpProblem};
use cpo::natural_gradient::{conjugate_gradient, HvpHandle};

fn main() -> cpo::Result<()> {
    // H = diag(2, 1), minimize g^T x
    let metric = HvpHandle::from_dense(2, vec![2.0, 0.0, 0.0, 1.0], 0.0);
    let g = [-1.0, -0.5];
    let delta = 0.1;
    let cases = [
        ("slack constraint", [0.0, 1.0], -5.0),
        ("binding constraint", [1.0, 1.0], -0.05),
        ("infeasible", [1.0, 0.0], 1.0),
    ];
    for (name, b, c) in cases {
        let p = LqclpProblem::from_metric(&g, &b, c, delta, &metric, 10, 1e-14)?;
        let sol = solve_single(&p);
        println!("{name:<20} tag {:<22} x = {:.5?}", sol.case_tag.as_str(), sol.direction);
        if sol.is_feasible() {
            let kkt = kkt_residuals(&g, &b, c, delta, &metric, &sol);
            println!("{:<20} lambda {:.5}  nu {:.5}  max KKT residual {:.1e}", "", sol.lambda_star, sol.nu_star[0], kkt.max());
        }
    }

    let b_list = vec![vec![1.0, 1.0], vec![-1.0, 2.0]];
    let c_list = vec![-0.05, -0.1];
    let h_inv_g = conjugate_gradient(&metric, &g, 10, 1e-14)?;
    let h_inv_b = b_list.iter().map(|b| conjugate_gradient(&metric, b, 10, 1e-14)).collect::<cpo::Result<Vec<_>>>()?;
    let sol = solve_dual_multi(&g, &b_list, &c_list, delta, &h_inv_g, &h_inv_b)?;
    println!(
        "two constraints        tag {:<22} x = {:.5?}  nu = {:.5?}",
        sol.case_tag.as_str(),
        sol.direction,
        sol.nu_star
    );
    Ok(())
}
