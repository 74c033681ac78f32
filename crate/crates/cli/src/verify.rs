use anyhow::Result;
use lambda_profile::regression::{cylinder_error, hermite_zero_error, sphere_error};
use lambda_profile::shoot::{find_delta_s, ShootOptions};
use lambda_profile::{IntegrationControls, Params};

use crate::Suite;

fn line(ok: bool, name: &str, detail: String) -> bool {
    say!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn exact_solutions() -> Result<bool> {
    let mut ok = true;
    let c = IntegrationControls::default();
    for lambda in [-1.0, -5f64.sqrt()] {
        let p = Params::new(2, lambda)?;
        let cyl = cylinder_error(&p, &c, 6.0)?;
        ok &= line(cyl.max() < 1e-7, &format!("cylinder λ={lambda:.6}"), format!("max error {:.2e}", cyl.max()));
        let sph = sphere_error(&p, &c, 0.01)?;
        ok &= line(sph.max() < 1e-7, &format!("sphere λ={lambda:.6}"), format!("max error {:.2e}", sph.max()));
    }
    Ok(ok)
}

fn hermite() -> Result<bool> {
    let err = hermite_zero_error()?;
    Ok(line(err < 1e-8, "hermite zeros c=2,6", format!("max location error {err:.2e}")))
}

fn shoot() -> Result<bool> {
    let p = Params::new(2, -5f64.sqrt())?;
    let res = find_delta_s(&p, 1e-6, &ShootOptions::default())?;
    let width = res.bracket.1 - res.bracket.0;
    let closed = res.closing_class == "C2(2,3)"
        && res.closure.r_end < 1e-3
        && res.closure.cos_end < 0.05
        && res.closure_refined.cos_end < res.closure.cos_end;
    let mut ok = line(width < 1e-6, "bracket", format!("δ_s = {:.10}, width {width:.1e}", res.delta_s));
    ok &= line(closed, "closure", format!("{} |cos θ| {:.2e} -> {:.2e}", res.closing_class, res.closure.cos_end, res.closure_refined.cos_end));
    ok &= line(
        res.embedded && res.convexity.min_h > 0.0 && res.convexity.kappa_profile_sign_changes >= 2,
        "flipped surface",
        format!(
            "embedded {}, min H {:.4}, κ_profile sign changes {}",
            res.embedded, res.convexity.min_h, res.convexity.kappa_profile_sign_changes
        ),
    );
    Ok(ok)
}

pub fn run(suite: Suite) -> Result<bool> {
    Ok(match suite {
        Suite::ExactSolutions => exact_solutions()?,
        Suite::Hermite => hermite()?,
        Suite::Shoot => shoot()?,
        Suite::All => {
            let a = exact_solutions()?;
            let b = hermite()?;
            let c = shoot()?;
            a && b && c
        }
    })
}
