//! Quantities with unit suffixes on the command line, converted to SI.

fn split_suffix(s: &str) -> (&str, &str) {
    let s = s.trim();
    let idx = s
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_alphabetic())
        .last()
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    // keep an exponent like `1e-3` with the number
    let (num, unit) = s.split_at(idx);
    if unit.eq_ignore_ascii_case("e") {
        return (s, "");
    }
    (num.trim(), unit)
}

/// `table` maps each suffix to the divisor that brings it to SI.
fn parse_with(s: &str, table: &[(&str, f64)], what: &str) -> Result<f64, String> {
    let (num, unit) = split_suffix(s);
    let value: f64 = num.parse().map_err(|_| format!("`{s}` is not a {what}"))?;
    let scale = table
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, k)| *k)
        .ok_or_else(|| {
            let known: Vec<&str> = table.iter().map(|(u, _)| *u).filter(|u| !u.is_empty()).collect();
            format!("unknown unit `{unit}` in `{s}` (use {})", known.join(", "))
        })?;
    let v = value / scale;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

/// Current in amperes: `13mA`, `10A`, `0.013`.
pub fn current(s: &str) -> Result<f64, String> {
    parse_with(s, &[("", 1.0), ("A", 1.0), ("mA", 1e3), ("uA", 1e6)], "current")
}

/// Time in seconds: `2ps`, `5ns`, `5fs`, `1e-9`.
pub fn time(s: &str) -> Result<f64, String> {
    parse_with(
        s,
        &[("", 1.0), ("s", 1.0), ("ms", 1e3), ("us", 1e6), ("ns", 1e9), ("ps", 1e12), ("fs", 1e15)],
        "time",
    )
}

/// Grid `start:stop:count` (inclusive, evenly spaced) or a comma list.
pub fn current_grid(s: &str) -> Result<Vec<f64>, String> {
    let mut values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{s}` must be start:stop:count"));
        }
        let (a, b) = (current(parts[0])?, current(parts[1])?);
        let count: usize = parts[2].trim().parse().map_err(|_| format!("bad count in `{s}`"))?;
        match count {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect(),
        }
    } else {
        s.split(',').map(current).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("sweep grid is empty".into());
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}
