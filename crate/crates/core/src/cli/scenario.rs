//! Scenario files: flat `key = value` lines, `#` starts a comment.
//!
//! ```text
//! species = 2
//! grid.cells = 64
//! grid.length = 1.0
//! d.1.2 = 1.0
//! initial.preset = cosine_perturbation
//! initial.amplitudes = 0.3
//! t_end = 0.1
//! ```
//!
//! Required: `species`, `grid.cells`, `d.i.j` for every pair, `initial.preset`,
//! `t_end`. Optional: `grid.length` (1), `cfl` (0.25), `integrator`
//! (`euler`|`heun`), `output_stride` (1), `fault.flux_truncation` (0).
//! Preset keys: `initial.amplitudes` (cosine_perturbation),
//! `initial.interface_width`, `initial.left`, `initial.right` (smoothed_step),
//! `initial.interface_width` (duncan_toor), `initial.cell.<k>` for
//! `k = 1..=grid.cells` (custom). Lists are comma separated.

use std::collections::BTreeMap;

use crate::mixture::{BinaryDiffusivities, Grid1D, RowTable};
use crate::solver::{InitialPreset, Integrator, Scenario};
use crate::{Error, Result};

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Entries {
    map: BTreeMap<String, Entry>,
}

fn parse_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(parse_error(line, content, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(parse_error(line, key, "empty key"));
            }
            if value.is_empty() {
                return Err(parse_error(line, key, "empty value"));
            }
            if let Some(prev) = map.get(key) {
                let prev: &Entry = prev;
                return Err(parse_error(line, key, format!("duplicate key (first set on line {})", prev.line)));
            }
            map.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                    used: false,
                },
            );
        }
        Ok(Entries { map })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.line)
    }

    fn required<T>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<(usize, T)> {
        let (line, value) = self.take(key).ok_or_else(|| Error::MissingKey(key.to_string()))?;
        parse(&value).map(|v| (line, v)).map_err(|m| parse_error(line, key, m))
    }

    fn optional<T>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<(usize, T)> {
        match self.take(key) {
            None => Ok((0, default)),
            Some((line, value)) => parse(&value).map(|v| (line, v)).map_err(|m| parse_error(line, key, m)),
        }
    }

    fn reject_unused(&self) -> Result<()> {
        // BTreeMap iteration is key-ordered; report the earliest line instead.
        match self.map.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(parse_error(e.line, key, "unknown key (or not used by the selected preset)")),
            None => Ok(()),
        }
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn count(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a nonnegative integer"))
}

fn list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|item| real(item.trim())).collect()
}

fn check_simplex(v: &[f64], n: usize) -> std::result::Result<(), String> {
    if v.len() != n {
        return Err(format!("expected {n} values, got {}", v.len()));
    }
    if v.iter().any(|&c| c < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(format!("{v:?} is not on the simplex (entries >= 0, sum 1 within 1e-12)"));
    }
    Ok(())
}

fn positive(v: f64) -> std::result::Result<f64, String> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

/// Parses and fully validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut entries = Entries::parse(text)?;

    let (_, n) = entries.required("species", |s| {
        let n = count(s)?;
        if n >= 2 {
            Ok(n)
        } else {
            Err(format!("need at least 2 species, got {n}"))
        }
    })?;
    let (_, cells) = entries.required("grid.cells", |s| {
        let c = count(s)?;
        if c >= 2 {
            Ok(c)
        } else {
            Err(format!("need at least 2 cells, got {c}"))
        }
    })?;
    let (_, length) = entries.optional("grid.length", 1.0, |s| real(s).and_then(positive))?;
    let grid = Grid1D::new(cells, length)?;

    let mut d = vec![vec![0.0; n]; n];
    let d_keys: Vec<String> = entries.map.keys().filter(|k| k.starts_with("d.")).cloned().collect();
    let mut seen = vec![vec![None::<(usize, String)>; n]; n];
    for key in d_keys {
        let line = entries.line_of(&key);
        let parts: Vec<&str> = key.split('.').collect();
        let index = |p: &str| p.parse::<usize>().ok().filter(|&i| (1..=n).contains(&i));
        let (i, j) = match parts.as_slice() {
            ["d", a, b] => match (index(a), index(b)) {
                (Some(i), Some(j)) if i != j => (i - 1, j - 1),
                _ => {
                    return Err(parse_error(
                        line,
                        &key,
                        format!("diffusivity keys are d.i.j with distinct i, j in 1..={n}"),
                    ))
                }
            },
            _ => return Err(parse_error(line, &key, "unknown key")),
        };
        let (line, value) = entries.take(&key).expect("key listed above");
        let v = real(&value).map_err(|m| parse_error(line, &key, m))?;
        if !(v > 0.0) {
            return Err(parse_error(line, &key, format!("diffusivity must be positive, got {v}")));
        }
        if let Some((_, other_key)) = &seen[j][i] {
            let other = d[j][i];
            if other != v {
                return Err(parse_error(
                    line,
                    &key,
                    format!("asymmetric diffusivity: {key} = {v} but {other_key} = {other}"),
                ));
            }
        }
        d[i][j] = v;
        d[j][i] = v;
        seen[i][j] = Some((line, key.clone()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if seen[i][j].is_none() && seen[j][i].is_none() {
                return Err(Error::MissingKey(format!("d.{}.{}", i + 1, j + 1)));
            }
        }
    }
    let d = BinaryDiffusivities::new(&d)?;

    let (preset_line, preset_name) = entries.required("initial.preset", |s| Ok(s.to_string()))?;
    let initial = match preset_name.as_str() {
        "cosine_perturbation" => {
            let (line, amplitudes) = entries.required("initial.amplitudes", list)?;
            let limit = 0.8 / n as f64;
            if amplitudes.len() != n - 1 {
                return Err(parse_error(
                    line,
                    "initial.amplitudes",
                    format!("expected {} amplitudes, got {}", n - 1, amplitudes.len()),
                ));
            }
            let total: f64 = amplitudes.iter().sum();
            if amplitudes.iter().any(|a| a.abs() > limit) || total.abs() > limit {
                return Err(parse_error(
                    line,
                    "initial.amplitudes",
                    format!("each amplitude and their sum must lie within ±{limit} to stay on the simplex"),
                ));
            }
            InitialPreset::CosinePerturbation { amplitudes }
        }
        "smoothed_step" => {
            let (_, width) = entries.optional("initial.interface_width", length / 32.0, |s| real(s).and_then(positive))?;
            let InitialPreset::SmoothedStep {
                left: default_left,
                right: default_right,
                ..
            } = InitialPreset::smoothed_step(n, width)
            else {
                unreachable!()
            };
            let (_, left) = entries.optional("initial.left", default_left, |s| {
                let v = list(s)?;
                check_simplex(&v, n).map(|_| v)
            })?;
            let (_, right) = entries.optional("initial.right", default_right, |s| {
                let v = list(s)?;
                check_simplex(&v, n).map(|_| v)
            })?;
            InitialPreset::SmoothedStep {
                interface_width: width,
                left,
                right,
            }
        }
        "duncan_toor" => {
            if n != 3 {
                return Err(parse_error(preset_line, "initial.preset", format!("duncan_toor needs species = 3, got {n}")));
            }
            let (_, width) = entries.optional("initial.interface_width", length / 16.0, |s| real(s).and_then(positive))?;
            InitialPreset::DuncanToor { interface_width: width }
        }
        "custom" => {
            let mut rows = Vec::with_capacity(cells);
            for k in 1..=cells {
                let key = format!("initial.cell.{k}");
                let (_, row) = entries.required(&key, |s| {
                    let v = list(s)?;
                    check_simplex(&v, n).map(|_| v)
                })?;
                rows.push(row);
            }
            InitialPreset::Custom {
                table: RowTable::from_rows(&rows)?,
            }
        }
        other => {
            return Err(parse_error(
                preset_line,
                "initial.preset",
                format!("unknown preset `{other}` (expected cosine_perturbation, smoothed_step, duncan_toor or custom)"),
            ))
        }
    };

    let (_, t_end) = entries.required("t_end", |s| {
        let v = real(s)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(format!("must be >= 0, got {v}"))
        }
    })?;
    let (_, cfl) = entries.optional("cfl", 0.25, |s| {
        let v = real(s)?;
        if v > 0.0 && v <= 1.0 {
            Ok(v)
        } else {
            Err(format!("must lie in (0, 1], got {v}"))
        }
    })?;
    let (_, integrator) = entries.optional("integrator", Integrator::Euler, |s| match s {
        "euler" => Ok(Integrator::Euler),
        "heun" => Ok(Integrator::Heun),
        other => Err(format!("unknown integrator `{other}` (expected euler or heun)")),
    })?;
    let (_, output_stride) = entries.optional("output_stride", 1, |s| {
        let v = count(s)?;
        if v >= 1 {
            Ok(v)
        } else {
            Err("must be at least 1".to_string())
        }
    })?;
    let (_, flux_truncation) = entries.optional("fault.flux_truncation", 0.0, |s| {
        let v = real(s)?;
        if (0.0..1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("must lie in [0, 1), got {v}"))
        }
    })?;
    entries.reject_unused()?;

    let scenario = Scenario {
        grid,
        n_species: n,
        d,
        initial,
        t_end,
        cfl,
        integrator,
        output_stride,
        flux_truncation,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn number(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| number(*x)).collect::<Vec<_>>().join(", ")
}

/// Canonical text for `scenario`; `parse_scenario` reads it back unchanged.
pub fn format_scenario(scenario: &Scenario) -> String {
    let n = scenario.n_species;
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("species", n.to_string());
    push("grid.cells", scenario.grid.num_cells().to_string());
    push("grid.length", number(scenario.grid.domain_length()));
    for i in 0..n {
        for j in i + 1..n {
            push(&format!("d.{}.{}", i + 1, j + 1), number(scenario.d.get(i, j)));
        }
    }
    push("initial.preset", scenario.initial.name().to_string());
    match &scenario.initial {
        InitialPreset::CosinePerturbation { amplitudes } => push("initial.amplitudes", join(amplitudes)),
        InitialPreset::SmoothedStep {
            interface_width,
            left,
            right,
        } => {
            push("initial.interface_width", number(*interface_width));
            push("initial.left", join(left));
            push("initial.right", join(right));
        }
        InitialPreset::DuncanToor { interface_width } => push("initial.interface_width", number(*interface_width)),
        InitialPreset::Custom { table } => {
            for (k, row) in table.iter_rows().enumerate() {
                push(&format!("initial.cell.{}", k + 1), join(row));
            }
        }
    }
    push("t_end", number(scenario.t_end));
    push("cfl", number(scenario.cfl));
    push("integrator", scenario.integrator.name().to_string());
    push("output_stride", scenario.output_stride.to_string());
    push("fault.flux_truncation", number(scenario.flux_truncation));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BINARY: &str = "\
# binary benchmark
species = 2
grid.cells = 64
d.1.2 = 1.0   # only pair
initial.preset = cosine_perturbation
initial.amplitudes = 0.3
t_end = 0.1
";

    fn expect_parse_error(text: &str, want_key: &str) -> (usize, String) {
        match parse_scenario(text) {
            Err(Error::Parse { line, key, message }) => {
                assert_eq!(key, want_key, "{message}");
                (line, message)
            }
            other => panic!("expected parse error for {want_key}, got {other:?}"),
        }
    }

    #[test]
    fn minimal_binary_gets_defaults() {
        let s = parse_scenario(BINARY).unwrap();
        assert_eq!(s.cfl, 0.25);
        assert_eq!(s.integrator, Integrator::Euler);
        assert_eq!(s.output_stride, 1);
        assert_eq!(s.flux_truncation, 0.0);
        assert_eq!(s.grid.num_cells(), 64);
        assert_eq!(s.grid.domain_length(), 1.0);
        assert_eq!(s.d.get(0, 1), 1.0);
        assert_eq!(s.initial, InitialPreset::CosinePerturbation { amplitudes: vec![0.3] });
    }

    #[test]
    fn negative_diffusivity_names_key() {
        let (line, _) = expect_parse_error(&BINARY.replace("d.1.2 = 1.0", "d.1.2 = -1"), "d.1.2");
        assert_eq!(line, 4);
    }

    #[test]
    fn asymmetric_diffusivity_rejected() {
        let text = BINARY.replace("d.1.2 = 1.0", "d.1.2 = 1.0\nd.2.1 = 2.0");
        let (_, message) = expect_parse_error(&text, "d.2.1");
        assert!(message.contains("asymmetric"));
        let consistent = BINARY.replace("d.1.2 = 1.0", "d.1.2 = 1.0\nd.2.1 = 1.0");
        assert!(parse_scenario(&consistent).is_ok());
    }

    #[test]
    fn missing_and_unknown_keys() {
        assert!(matches!(
            parse_scenario(&BINARY.replace("t_end = 0.1\n", "")),
            Err(Error::MissingKey(k)) if k == "t_end"
        ));
        assert!(matches!(
            parse_scenario(&BINARY.replace("d.1.2 = 1.0", "")),
            Err(Error::MissingKey(k)) if k == "d.1.2"
        ));
        let (line, _) = expect_parse_error(&format!("{BINARY}colour = blue\n"), "colour");
        assert_eq!(line, 8);
        expect_parse_error(&format!("{BINARY}initial.interface_width = 0.1\n"), "initial.interface_width");
        expect_parse_error(&BINARY.replace("d.1.2", "d.1.3"), "d.1.3");
    }

    #[test]
    fn preset_parameters_checked() {
        expect_parse_error(&BINARY.replace("0.3", "0.45"), "initial.amplitudes");
        expect_parse_error(&BINARY.replace("cosine_perturbation", "duncan_toor"), "initial.preset");
        expect_parse_error(&BINARY.replace("cosine_perturbation", "zigzag"), "initial.preset");
        expect_parse_error(&BINARY.replace("t_end = 0.1", "t_end = 0.1\ncfl = 1.5"), "cfl");
        expect_parse_error(&BINARY.replace("t_end = 0.1", "t_end = 0.1\nintegrator = rk4"), "integrator");
        expect_parse_error(&BINARY.replace("t_end = 0.1", "t_end = -1"), "t_end");
        expect_parse_error(&BINARY.replace("grid.cells = 64", "grid.cells = 64\ngrid.cells = 32"), "grid.cells");
    }

    #[test]
    fn custom_table_and_round_trip() {
        let text = "\
species = 3
grid.cells = 3
grid.length = 2
d.1.2 = 1
d.1.3 = 0.5
d.2.3 = 0.25
initial.preset = custom
initial.cell.1 = 0.5, 0.25, 0.25
initial.cell.2 = 0.2, 0.3, 0.5
initial.cell.3 = 0, 0, 1
t_end = 0.01
integrator = heun
output_stride = 5
";
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.integrator, Integrator::Heun);
        assert_eq!(s.grid.domain_length(), 2.0);
        match &s.initial {
            InitialPreset::Custom { table } => assert_eq!(table.row(2), &[0.0, 0.0, 1.0]),
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_scenario(&format_scenario(&s)).unwrap(), s);
        expect_parse_error(&text.replace("0, 0, 1", "0, 0.5, 1"), "initial.cell.3");
        assert!(matches!(
            parse_scenario(&text.replace("initial.cell.3 = 0, 0, 1\n", "")),
            Err(Error::MissingKey(k)) if k == "initial.cell.3"
        ));
    }

    #[test]
    fn other_presets_round_trip() {
        let dt = "\
species = 3
grid.cells = 64
d.1.2 = 1
d.1.3 = 0.816
d.2.3 = 0.2017
initial.preset = duncan_toor
t_end = 0.1
";
        let s = parse_scenario(dt).unwrap();
        assert_eq!(s.initial, InitialPreset::DuncanToor { interface_width: 1.0 / 16.0 });
        assert_eq!(parse_scenario(&format_scenario(&s)).unwrap(), s);
        let step = dt.replace("duncan_toor", "smoothed_step\ninitial.left = 0.6, 0.4, 0");
        let s = parse_scenario(&step).unwrap();
        assert_eq!(parse_scenario(&format_scenario(&s)).unwrap(), s);
        expect_parse_error(&dt.replace("duncan_toor", "smoothed_step\ninitial.left = 0.6, 0.6, 0"), "initial.left");
    }
}
