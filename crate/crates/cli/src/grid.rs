//! Numeric grids given on the command line.

/// Grid points are rounded to this many decimals so that `0:0.6:0.2` yields
/// `0.6` rather than `0.6000000000000001`.
const DECIMALS: i32 = 12;

fn round(v: f64) -> f64 {
    let scale = 10f64.powi(DECIMALS);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn number(token: &str) -> Result<f64, String> {
    token
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number '{token}'"))
}

/// Parses `start:stop:step` (inclusive), a comma-separated list, or a single
/// value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if step <= 0.0 {
                return Err(format!("grid step {step} must be positive"));
            }
            if stop < start {
                return Err(format!("grid stop {stop} lies below start {start}"));
            }
            let span = (stop - start) / step;
            let count = (span + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| round(start + i as f64 * step)).collect())
        }
        [single] => single.split(',').map(number).collect(),
        _ => Err(format!("grid '{spec}' must be start:stop:step, a list or a value")),
    }
}
