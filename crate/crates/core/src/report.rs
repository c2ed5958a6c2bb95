//! CSV rendering of all emitted tables.
//!
//! Tables are comma-separated text with a header row. Floats use shortest
//! round-trip formatting, so a table is a pure, deterministic function of
//! the results it renders.

use std::fmt::Write;

use crate::eval::{NcapCase, SweepResult, TraceRow};
use crate::trainer::EpisodeLog;

/// Per-episode training log. Capped episodes print `capped` in the outcome
/// column.
pub fn episode_log_csv(logs: &[EpisodeLog]) -> String {
    let mut out = String::from(
        "episode,outcome,return,return_discounted,steps,v_init,ttc,scenario,side,final_gap\n",
    );
    for log in logs {
        let outcome = match log.outcome {
            Some(event) => event.to_string(),
            None => "capped".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            log.index,
            outcome,
            log.ret,
            log.ret_discounted,
            log.steps,
            log.v_init,
            log.ttc,
            log.scenario,
            log.side,
            log.final_gap
        )
        .expect("writing to string cannot fail");
    }
    out
}

/// One row per TTC value.
pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from(
        "ttc,trials,bumps,stops,passes,crosses,capped,collision_rate,infeasible_rate\n",
    );
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.ttc,
            r.trials,
            r.bumps,
            r.stops,
            r.passes,
            r.crosses,
            r.capped,
            r.collision_rate(),
            r.infeasible_rate()
        )
        .expect("writing to string cannot fail");
    }
    out
}

/// One row per test case (18 rows for the full suite).
pub fn ncap_csv(cases: &[NcapCase]) -> String {
    let mut out =
        String::from("test,v_test_kmh,collided,v_impact,points_available,points_awarded\n");
    for c in cases {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.test, c.v_test_kmh, c.collided, c.v_impact, c.points_available, c.points_awarded
        )
        .expect("writing to string cannot fail");
    }
    out
}

/// Per-step trajectory rows; the initial row has no action.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("t,veh_x,ped_x,ped_y,v,action,reward\n");
    for r in rows {
        let action = match r.action {
            Some(a) => a.to_string(),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t, r.veh_x, r.ped_x, r.ped_y, r.v, action, r.reward
        )
        .expect("writing to string cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EpisodeEvent, ScenarioKind, Side};

    #[test]
    fn episode_log_formats_rows() {
        let logs = vec![EpisodeLog {
            index: 0,
            outcome: Some(EpisodeEvent::Pass),
            ret: 0.0,
            ret_discounted: 0.0,
            steps: 51,
            v_init: 10.0,
            ttc: 2.0,
            scenario: ScenarioKind::Stay,
            side: Side::Near,
            final_gap: -1.0,
        }];
        let csv = episode_log_csv(&logs);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("episode,outcome"));
        assert_eq!(lines.next().unwrap(), "0,pass,0,0,51,10,2,stay,near,-1");
    }

    #[test]
    fn capped_episodes_are_labeled() {
        let logs = vec![EpisodeLog {
            index: 3,
            outcome: None,
            ret: -1.5,
            ret_discounted: -1.25,
            steps: 600,
            v_init: 5.0,
            ttc: 3.0,
            scenario: ScenarioKind::Cross,
            side: Side::Far,
            final_gap: 2.5,
        }];
        let csv = episode_log_csv(&logs);
        assert!(csv.lines().nth(1).unwrap().contains(",capped,"));
    }

    #[test]
    fn float_formatting_round_trips() {
        let logs = vec![EpisodeLog {
            index: 1,
            outcome: Some(EpisodeEvent::Stop),
            ret: -2.5480000000000014,
            ret_discounted: -2.0000000000000004,
            steps: 11,
            v_init: 16.670000000000002,
            ttc: 1.5,
            scenario: ScenarioKind::Cross,
            side: Side::Far,
            final_gap: 44.89795918367347,
        }];
        let csv = episode_log_csv(&logs);
        let row = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), -2.5480000000000014);
        assert_eq!(fields[5].parse::<f64>().unwrap(), 16.670000000000002);
        assert_eq!(fields[9].parse::<f64>().unwrap(), 44.89795918367347);
    }
}
