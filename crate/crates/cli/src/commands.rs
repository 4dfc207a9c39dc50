use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tsseg::{
    cross_corr, monte_carlo, parse_csv, reports_csv, rolling_compare, segment, segment_volatility,
    table_csv, Error, ForecastConfig, ForecastMethod, LatentDesign, Result, SegmentationDocument,
    SegmentationResult, TimeSeriesMatrix,
};

use crate::config::{HeaderArg, InputArgs, SegmentArgs};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

fn first_row_is_header(bytes: &[u8]) -> bool {
    let text = String::from_utf8_lossy(bytes);
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.split(',').any(|c| c.trim().parse::<f64>().is_err()))
}

pub fn load(input: &InputArgs) -> Result<TimeSeriesMatrix> {
    let bytes = fs::read(&input.input).map_err(|e| io_error(&input.input, e))?;
    let has_header = match input.header {
        HeaderArg::Yes => true,
        HeaderArg::No => false,
        HeaderArg::Auto => first_row_is_header(&bytes),
    };
    let y = parse_csv(bytes.as_slice(), has_header)?;
    match input.seasonal_diff {
        Some(lag) => y.seasonal_difference(lag),
        None => Ok(y),
    }
}

fn corr_stats(res: &SegmentationResult) -> Result<String> {
    let z = &res.prewhitened;
    let m = res.m as isize;
    let mut out = String::from("i,j,h,rho\n");
    for i in 0..z.p() {
        for j in i + 1..z.p() {
            for h in -m..=m {
                let rho = cross_corr(z, i, j, h)?;
                let _ = writeln!(out, "{i},{j},{h},{rho}");
            }
        }
    }
    Ok(out)
}

fn xhat_csv(res: &SegmentationResult) -> Result<String> {
    let mut buf = Vec::new();
    res.x_hat.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn summarize(res: &SegmentationResult) -> String {
    let groups: Vec<String> = res
        .partition
        .groups()
        .iter()
        .map(|g| format!("{{{}}}", g.iter().map(usize::to_string).collect::<Vec<_>>().join(",")))
        .collect();
    let mut s = format!("{} group(s): {}", groups.len(), groups.join(" "));
    if let (Some(oy), Some(ox)) = (res.omega_y, res.omega_x) {
        let _ = write!(s, "; omega y {oy:.6}, x {ox:.6}");
    }
    s
}

pub fn cmd_segment(input: &InputArgs, seg: &SegmentArgs, out: &Path) -> Result<()> {
    let y = load(input)?;
    let res = segment(&y, &seg.config())?;
    let doc = SegmentationDocument::from_result(&res, y.names());
    write(out, "segmentation.json", &doc.to_json()?)?;
    write(out, "xhat.csv", &xhat_csv(&res)?)?;
    write(out, "corr_stats.csv", &corr_stats(&res)?)?;
    println!("{}", summarize(&res));
    Ok(())
}

pub fn cmd_volatility(input: &InputArgs, seg: &SegmentArgs, out: &Path) -> Result<()> {
    let y = load(input)?;
    let res = segment_volatility(&y, &seg.config())?;
    let doc = SegmentationDocument::from_result(&res, y.names());
    write(out, "segmentation.json", &doc.to_json()?)?;
    println!("{}", summarize(&res));
    Ok(())
}

pub fn cmd_simulate(design: &str, ns: &[usize], reps: usize, seed: u64, seg: &SegmentArgs, out: &Path) -> Result<()> {
    let design = LatentDesign::by_name(design)?;
    let cfg = seg.config();
    let mut reports = Vec::with_capacity(ns.len());
    for &n in ns {
        let r = monte_carlo(&design, n, reps, seed, &cfg)?;
        println!(
            "{} n={n}: correct {:.3}, incomplete {:.3}, other {:.3}",
            r.design, r.correct, r.incomplete, r.other
        );
        reports.push(r);
    }
    write(out, "table.csv", &table_csv(&reports))?;
    write(out, "detail.json", &serde_json::to_string_pretty(&reports)?)?;
    Ok(())
}

pub fn cmd_forecast(input: &InputArgs, holdout: usize, seg: &SegmentArgs, var_max_order: usize, out: &Path) -> Result<()> {
    // differencing is undone inside the comparison, so load the raw levels
    let raw = InputArgs {
        seasonal_diff: None,
        ..input.clone()
    };
    let y = load(&raw)?;
    let methods = [
        ForecastMethod::Var { max_order: var_max_order },
        ForecastMethod::Rvar {
            max_order: var_max_order,
            t_threshold: tsseg::forecast::DEFAULT_T_THRESHOLD,
        },
        ForecastMethod::Segmentation {
            config: seg.config(),
            var_max_order,
            ar_max_order: seg.max_ar,
        },
    ];
    let cfg = ForecastConfig {
        holdout,
        seasonal_lag: input.seasonal_diff,
    };
    let reports = rolling_compare(&y, &cfg, &methods)?;
    write(out, "report.csv", &reports_csv(&reports, y.names()))?;
    write(out, "report.json", &serde_json::to_string_pretty(&reports)?)?;
    for r in &reports {
        println!(
            "{}: mean MSE h1 {:.6} (sd {:.6}), h2 {:.6} (sd {:.6})",
            r.method, r.mean_mse[0], r.sd_mse[0], r.mean_mse[1], r.sd_mse[1]
        );
    }
    Ok(())
}
