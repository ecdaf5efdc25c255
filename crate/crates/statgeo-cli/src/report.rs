//! Machine- and human-readable verification reports.
//!
//! The JSON rendering is byte-deterministic: fixed key order, no timestamps,
//! and every float printed at 17 significant digits, so identical inputs
//! produce identical files regardless of the parallelism degree.

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    /// Stable identifier of the mathematical statement being verified.
    pub anchor: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub scene: String,
    pub object: String,
    pub checks: Vec<Check>,
    pub values: Vec<(String, f64)>,
    pub data_files: Vec<String>,
}

impl Report {
    pub fn new(command: &str, scene: &str, object: &str) -> Report {
        Report {
            command: command.to_string(),
            scene: scene.to_string(),
            object: object.to_string(),
            checks: Vec::new(),
            values: Vec::new(),
            data_files: Vec::new(),
        }
    }

    /// Record a check; the verdict is `residual < tolerance`.
    pub fn check(&mut self, name: &str, anchor: &str, residual: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            residual,
            tolerance,
            pass: residual.is_finite() && residual < tolerance,
        });
    }

    /// Record a boolean condition as a 0/1 residual against 1/2.
    pub fn check_bool(&mut self, name: &str, anchor: &str, ok: bool) {
        self.check(name, anchor, if ok { 0.0 } else { 1.0 }, 0.5);
    }

    /// Informational value, not a verdict.
    pub fn value(&mut self, name: &str, v: f64) {
        self.values.push((name.to_string(), v));
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn merge_prefixed(&mut self, prefix: &str, other: Report) {
        for mut c in other.checks {
            c.name = format!("{prefix}/{}", c.name);
            self.checks.push(c);
        }
        for (name, v) in other.values {
            self.values.push((format!("{prefix}/{name}"), v));
        }
        for f in other.data_files {
            self.data_files.push(f);
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = String::with_capacity(4096);
        out.push_str("{\n");
        out.push_str(&format!("  \"tool\": {},\n", json_str(concat!("statgeo ", env!("CARGO_PKG_VERSION")))));
        out.push_str(&format!("  \"command\": {},\n", json_str(&self.command)));
        out.push_str(&format!("  \"scene\": {},\n", json_str(&self.scene)));
        out.push_str(&format!("  \"object\": {},\n", json_str(&self.object)));
        out.push_str("  \"checks\": [\n");
        for (idx, c) in self.checks.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"name\": {}, \"anchor\": {}, \"residual\": {}, \"tolerance\": {}, \"pass\": {}}}{}\n",
                json_str(&c.name),
                json_str(&c.anchor),
                json_f64(c.residual),
                json_f64(c.tolerance),
                c.pass,
                if idx + 1 < self.checks.len() { "," } else { "" }
            ));
        }
        out.push_str("  ],\n");
        out.push_str("  \"values\": [\n");
        for (idx, (name, v)) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"name\": {}, \"value\": {}}}{}\n",
                json_str(name),
                json_f64(*v),
                if idx + 1 < self.values.len() { "," } else { "" }
            ));
        }
        out.push_str("  ],\n");
        out.push_str("  \"data_files\": [");
        for (idx, f) in self.data_files.iter().enumerate() {
            if idx > 0 {
                out.push_str(", ");
            }
            out.push_str(&json_str(f));
        }
        out.push_str("],\n");
        out.push_str(&format!(
            "  \"verdict\": {}\n",
            json_str(if self.all_pass() { "pass" } else { "fail" })
        ));
        out.push_str("}\n");
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} on {} :: {}\n",
            self.command, self.scene, self.object
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "  [{}] {:<52} residual {:>12.5e}  tol {:>9.1e}  ({})\n",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.residual,
                c.tolerance,
                c.anchor
            ));
        }
        for (name, v) in &self.values {
            out.push_str(&format!("   *   {name} = {v:.12e}\n"));
        }
        for f in &self.data_files {
            out.push_str(&format!("   >   wrote {f}\n"));
        }
        out.push_str(&format!(
            "  verdict: {}\n",
            if self.all_pass() { "pass" } else { "fail" }
        ));
        out
    }
}

/// Fixed 17-significant-digit rendering; valid JSON number text.
pub fn json_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // residuals are finite by construction; anything else is a bug
        // surfaced loudly in the report
        "null".to_string()
    }
}

pub fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_stable_and_parseable() {
        let mut r = Report::new("fisher", "gallery:gaussian", "gaussian");
        r.check("normalization", "density-normalization", 3.2e-12, 1e-8);
        r.value("g[0][0]", 1.0000000000001);
        let a = r.to_json();
        let b = r.to_json();
        assert_eq!(a, b);
        let parsed: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(parsed["verdict"], "pass");
        assert!(parsed["checks"][0]["pass"].as_bool().unwrap());
    }

    #[test]
    fn seventeen_digit_rendering() {
        assert_eq!(json_f64(1.0), "1.0000000000000000e0");
        assert_eq!(json_f64(-0.03125), "-3.1250000000000000e-2");
        // 17 significant digits round-trip every f64 exactly
        for x in [0.1f64, -2.5e-9, std::f64::consts::PI, 1.0 / 3.0] {
            let back: f64 = json_f64(x).parse().unwrap();
            assert_eq!(back, x);
        }
    }
}
