//! CSV and text artifact serialization.
//!
//! Every writer here is a pure `-> String` function so output bytes are a
//! deterministic function of the data; the file writers only add IO. Floats
//! use Rust's shortest round-trip formatting, booleans are 0/1.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::detect::ChallengeRecord;
use crate::error::{Error, Result};
use crate::qcd::{KChallengeReport, ScalingArms, SlopeReport};
use crate::scenario::{SpectroRow, TrackPoint};
use crate::signal::SignalTrace;
use crate::sweep::{BinClassPoint, RfidReport, RocCurve, SweepReport};

fn b01(b: bool) -> u8 {
    u8::from(b)
}

/// `t_seconds,value` rows for a sampled signal.
pub fn trace_csv(trace: &SignalTrace) -> String {
    let mut s = String::from("t_seconds,value\n");
    for (i, &v) in trace.samples.iter().enumerate() {
        let _ = writeln!(s, "{},{}", trace.time_at(i), v);
    }
    s
}

/// Per-challenge detector verdicts. `truth` marks which challenges ran
/// under attack; lengths must match.
pub fn detect_report_csv(records: &[ChallengeRecord], truth: &[bool]) -> Result<String> {
    if records.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} records vs {} truth labels",
            records.len(),
            truth.len()
        )));
    }
    let mut s = String::from("challenge_index,t_challenge_s,g_max,alarm,truth_attacked\n");
    for (rec, &attacked) in records.iter().zip(truth) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            rec.index,
            rec.t_challenge_s,
            rec.g_max,
            b01(rec.alarm),
            b01(attacked)
        );
    }
    Ok(s)
}

/// Frequency-domain monitor cells.
pub fn spectro_csv(rows: &[SpectroRow]) -> String {
    let mut s = String::from("frame,bin,freq_hz,magnitude,G,attacked\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.frame,
            r.bin,
            r.freq_hz,
            r.magnitude,
            r.g,
            b01(r.attacked)
        );
    }
    s
}

/// Secure frequency estimate over time. Frames before the first
/// authenticated estimate serialize as NaN.
pub fn track_csv(points: &[TrackPoint]) -> String {
    let mut s = String::from("frame,freq_hz_estimate\n");
    for p in points {
        let _ = writeln!(s, "{},{}", p.sample, p.freq_hz.unwrap_or(f64::NAN));
    }
    s
}

/// Reaction-probability sweep rows, one per false-alarm budget.
pub fn qcd_slope_csv(report: &SlopeReport) -> String {
    let mut s = String::from("alpha,K,prob_delay_le_K,ci_lo,ci_hi,mean_delay,p_fa_empirical\n");
    for p in &report.points {
        let d = &p.profile.delay_within[0];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.alpha, report.k, d.prob, d.ci.0, d.ci.1, p.profile.mean_delay, p.profile.p_fa
        );
    }
    s
}

/// Both arms of the amplitude/grid trade, one row per arm.
pub fn qcd_scaling_csv(arms: &ScalingArms) -> String {
    let mut s =
        String::from("arm,amplitude_scale,slot_samples,K,prob_delay_le_K,ci_lo,ci_hi,mean_delay,p_fa_empirical\n");
    let slot_scaled = (arms.beta * arms.beta * arms.slot_base as f64).round() as usize;
    for (name, scale, slot, profile) in [
        ("base", 1.0, arms.slot_base, &arms.base),
        ("scaled", 1.0 / arms.beta, slot_scaled, &arms.scaled),
    ] {
        let d = &profile.delay_within[0];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            name, scale, slot, arms.k, d.prob, d.ci.0, d.ci.1, profile.mean_delay, profile.p_fa
        );
    }
    s
}

/// Multi-challenge detection probability against the analytic bound.
pub fn k_bound_csv(reports: &[KChallengeReport]) -> String {
    let mut s = String::from("k,alpha_hat,detected,ci_lo,ci_hi,bound\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.k, r.alpha_hat, r.detected, r.detected_ci.0, r.detected_ci.1, r.bound
        );
    }
    s
}

/// Detection-accuracy sweep rows.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = String::from("tau_attack_s,fs_hz,accuracy,f1,ci_lo,ci_hi\n");
    for p in &report.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.tau_attack_s, p.fs_hz, p.accuracy, p.f1, p.ci.0, p.ci.1
        );
    }
    s
}

/// Attacked-bin classification sweep rows.
pub fn bin_class_csv(points: &[BinClassPoint]) -> String {
    let mut s =
        String::from("tau_attack_s,fs_hz,windows,tpr,tpr_ci_lo,tpr_ci_hi,fpr,fpr_ci_lo,fpr_ci_hi\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.tau_attack_s,
            p.fs_hz,
            p.windows,
            p.tpr,
            p.tpr_ci.0,
            p.tpr_ci.1,
            p.fpr,
            p.fpr_ci.0,
            p.fpr_ci.1
        );
    }
    s
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

pub fn rfid_csv(report: &RfidReport) -> String {
    let mut s =
        String::from("kappa_eve,runs,alarms,alarm_rate,ci_lo,ci_hi,mean_g,displacement_ratio\n");
    for p in &report.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.kappa_eve,
            p.runs,
            p.alarms,
            p.alarm_rate,
            p.ci.0,
            p.ci.1,
            p.mean_g,
            p.displacement_ratio
        );
    }
    s
}

/// Scores-with-labels rows, the input format the roc command reads back.
pub fn scores_csv(scores: &[f64], labels: &[bool]) -> Result<String> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut s = String::from("score,label\n");
    for (&v, &l) in scores.iter().zip(labels) {
        let _ = writeln!(s, "{},{}", v, b01(l));
    }
    Ok(s)
}

/// Parse the `score,label` format produced by [`scores_csv`].
pub fn parse_scores_csv(text: &str) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.starts_with("score") {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: lineno + 1, message };
        let Some((score, label)) = line.split_once(',') else {
            return Err(parse_err(format!("expected `score,label`, got {line:?}")));
        };
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad score {:?}", score.trim())))?;
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("bad label {other:?}, expected 0 or 1"))),
        };
        scores.push(score);
        labels.push(label);
    }
    if scores.is_empty() {
        return Err(Error::Parameter("score file had no data rows".into()));
    }
    Ok((scores, labels))
}

/// Index of the artifacts one run produced, keyed to its preset or config
/// anchor so downstream tooling can find everything by name.
pub fn manifest_text(anchor: &str, entries: &[(String, String)]) -> String {
    let mut s = String::from("# pycra-manifest v1\n");
    let _ = writeln!(s, "anchor = {anchor}");
    for (file, description) in entries {
        let _ = writeln!(s, "{file} = {description}");
    }
    s
}

/// Write `content` at `path`, creating parent directories as needed.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    fs::write(path, content).map_err(io_err)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{RocPoint, SweepPoint};
    use crate::stats::Counts;

    #[test]
    fn trace_csv_golden() {
        let trace = SignalTrace::new(vec![0.0, 0.5, -1.25], 10.0, 0.0).unwrap();
        assert_eq!(
            trace_csv(&trace),
            "t_seconds,value\n0,0\n0.1,0.5\n0.2,-1.25\n"
        );
    }

    #[test]
    fn detect_report_csv_golden() {
        let records = vec![
            ChallengeRecord {
                index: 0,
                t_challenge_s: 0.005,
                g_max: 0.25,
                alarm: true,
                skipped: false,
            },
            ChallengeRecord {
                index: 1,
                t_challenge_s: 0.02,
                g_max: f64::NAN,
                alarm: false,
                skipped: true,
            },
        ];
        let csv = detect_report_csv(&records, &[true, false]).unwrap();
        assert_eq!(
            csv,
            "challenge_index,t_challenge_s,g_max,alarm,truth_attacked\n\
             0,0.005,0.25,1,1\n\
             1,0.02,NaN,0,0\n"
        );
        assert!(detect_report_csv(&records, &[true]).is_err());
    }

    #[test]
    fn track_csv_serializes_missing_estimates_as_nan() {
        let points = vec![
            TrackPoint { sample: 0, freq_hz: None, fresh: false },
            TrackPoint { sample: 10, freq_hz: Some(71.0), fresh: true },
        ];
        assert_eq!(track_csv(&points), "frame,freq_hz_estimate\n0,NaN\n10,71\n");
    }

    #[test]
    fn sweep_csv_golden() {
        let report = SweepReport {
            points: vec![SweepPoint {
                tau_attack_s: 0.0007,
                fs_hz: 10000.0,
                counts: Counts::default(),
                accuracy: 0.975,
                f1: 0.96,
                ci: (0.9, 0.99),
            }],
            trials: 30,
            warnings: vec![],
        };
        assert_eq!(
            sweep_csv(&report),
            "tau_attack_s,fs_hz,accuracy,f1,ci_lo,ci_hi\n0.0007,10000,0.975,0.96,0.9,0.99\n"
        );
    }

    #[test]
    fn scores_round_trip() {
        let scores = vec![0.5, -1.5, 3.25];
        let labels = vec![true, false, true];
        let text = scores_csv(&scores, &labels).unwrap();
        let (s2, l2) = parse_scores_csv(&text).unwrap();
        assert_eq!(scores, s2);
        assert_eq!(labels, l2);
    }

    #[test]
    fn parse_scores_reports_line_numbers() {
        let err = parse_scores_csv("score,label\n1.0,1\nbroken\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn roc_csv_golden() {
        let curve = RocCurve {
            points: vec![
                RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 },
                RocPoint { threshold: 0.5, fpr: 0.25, tpr: 1.0 },
            ],
            auc: 0.875,
        };
        assert_eq!(roc_csv(&curve), "threshold,fpr,tpr\ninf,0,0\n0.5,0.25,1\n");
    }

    #[test]
    fn manifest_golden() {
        let text = manifest_text(
            "fig5",
            &[("trace.csv".into(), "sensor output".into())],
        );
        assert_eq!(text, "# pycra-manifest v1\nanchor = fig5\ntrace.csv = sensor output\n");
    }

    #[test]
    fn write_and_read_round_trip() {
        let dir = std::env::temp_dir().join("pycra-export-test");
        let path = dir.join("nested").join("file.csv");
        write_text(&path, "a,b\n1,2\n").unwrap();
        assert_eq!(read_text(&path).unwrap(), "a,b\n1,2\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
