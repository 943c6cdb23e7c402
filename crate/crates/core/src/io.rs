//! Tabular output formats. Every CSV starts with one `#` metadata line of
//! space-separated `key=value` pairs, then a header row. Floats use Rust's
//! shortest round-trip formatting, so identical inputs give identical bytes.

use std::fmt::Write;

use crate::analysis::{BoundReport, StationaryEstimate};
use crate::exact::{ExtendedChain, HittingTimes};
use crate::simulate::{HittingSample, Trajectory};

/// `# key=value ...` metadata line (with trailing newline).
pub fn metadata_line(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("#");
    for (k, v) in pairs {
        let _ = write!(s, " {k}={v}");
    }
    s.push('\n');
    s
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns `t,x,fall_length,zeta,regime`.
pub fn trajectory_csv(traj: &Trajectory, meta: &[(&str, String)]) -> String {
    let mut s = metadata_line(meta);
    s.push_str("t,x,fall_length,zeta,regime\n");
    for (t, (x, m)) in traj.states.iter().zip(&traj.memories).enumerate() {
        let zeta = traj.segment_indices(t).expect("index within horizon").zeta;
        let regime = if m.is_singleton() { "up" } else { "down" };
        let _ = writeln!(s, "{t},{x},{},{},{regime}", m.fall_length(), opt(zeta));
    }
    s
}

/// Columns `rep,tau,gamma,censored`; missing times are empty.
pub fn hitting_samples_csv(samples: &[HittingSample], meta: &[(&str, String)]) -> String {
    let mut s = metadata_line(meta);
    s.push_str("rep,tau,gamma,censored\n");
    for (i, h) in samples.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", opt(h.tau), opt(h.gamma), h.censored);
    }
    s
}

/// Columns `state_path,pi`.
pub fn stationary_csv(chain: &ExtendedChain, pi: &[f64], meta: &[(&str, String)]) -> String {
    let mut s = metadata_line(meta);
    s.push_str("state_path,pi\n");
    for (m, p) in chain.states().iter().zip(pi) {
        let _ = writeln!(s, "{m},{p}");
    }
    s
}

/// Columns `state_path,e_tau,e_gamma`.
pub fn exact_hitting_csv(
    chain: &ExtendedChain,
    h: &HittingTimes,
    meta: &[(&str, String)],
) -> String {
    let mut s = metadata_line(meta);
    s.push_str("state_path,e_tau,e_gamma\n");
    for (i, m) in chain.states().iter().enumerate() {
        let _ = writeln!(s, "{m},{},{}", h.e_tau[i], h.e_gamma[i]);
    }
    s
}

/// Columns `t,r`.
pub fn reliability_csv(curve: &[f64], meta: &[(&str, String)]) -> String {
    let mut s = metadata_line(meta);
    s.push_str("t,r\n");
    for (t, r) in curve.iter().enumerate() {
        let _ = writeln!(s, "{t},{r}");
    }
    s
}

/// Columns `x,p`.
pub fn estimate_csv(est: &StationaryEstimate, meta: &[(&str, String)]) -> String {
    let mut s = metadata_line(meta);
    s.push_str("x,p\n");
    for (x, p) in est.support.iter().zip(&est.probs) {
        let _ = writeln!(s, "{x},{p}");
    }
    s
}

/// One row per claim record:
/// `claim,start,mean,std_err,ci_low,ci_high,bound,margin,pass,exact,replications,censored,reliable,seed`.
pub fn bound_report_csv(report: &BoundReport, meta: &[(&str, String)]) -> String {
    let mut s = metadata_line(meta);
    s.push_str(
        "claim,start,mean,std_err,ci_low,ci_high,bound,margin,pass,exact,replications,censored,reliable,seed\n",
    );
    for r in &report.records {
        let claim = serde_json::to_value(r.claim).expect("claim serializes");
        let e = &r.estimate;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            claim.as_str().unwrap_or_default(),
            r.start,
            e.mean,
            e.std_err,
            e.ci_low,
            e.ci_high,
            opt(r.bound),
            opt(r.margin),
            r.pass,
            opt(r.exact),
            r.replications,
            r.censored,
            r.reliable,
            r.seed
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProcessSpec;
    use crate::simulate::simulate_trajectory;

    #[test]
    fn trajectory_csv_layout() {
        let spec = ProcessSpec::rm1();
        let t = simulate_trajectory(&spec, 5, None, 3, 42).unwrap();
        let csv = trajectory_csv(&t, &[("seed", "42".into())]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# seed=42");
        assert_eq!(lines[1], "t,x,fall_length,zeta,regime");
        assert_eq!(lines[2], "0,5,0,,up");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn hitting_csv_layout() {
        let samples = [
            HittingSample {
                tau: Some(0),
                gamma: Some(2),
                censored: false,
            },
            HittingSample {
                tau: None,
                gamma: None,
                censored: true,
            },
        ];
        let csv = hitting_samples_csv(&samples, &[("seed", "1".into())]);
        assert_eq!(
            csv,
            "# seed=1\nrep,tau,gamma,censored\n0,0,2,false\n1,,,true\n"
        );
    }
}
