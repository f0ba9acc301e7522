//! Deterministic JSON emission for report artifacts: fixed field order,
//! floats at 17 significant digits (round-trip exact), newline-terminated.

use rough_resonance_core::C64;

/// One float, 17 significant digits; non-finite values become `null`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// A complex number as a two-element array.
pub fn cplx(z: C64) -> String {
    format!("[{}, {}]", num(z.re), num(z.im))
}

/// String with JSON escaping.
pub fn string(s: &str) -> String {
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

/// Indented object/array assembly.
pub struct Doc {
    buf: String,
    indent: usize,
}

impl Doc {
    pub fn new() -> Doc {
        Doc {
            buf: String::new(),
            indent: 0,
        }
    }

    fn pad(&mut self) {
        for _ in 0..self.indent {
            self.buf.push_str("  ");
        }
    }

    /// Raw line at the current indent.
    pub fn line(&mut self, s: &str) {
        self.pad();
        self.buf.push_str(s);
        self.buf.push('\n');
    }

    pub fn open(&mut self, s: &str) {
        self.line(s);
        self.indent += 1;
    }

    pub fn close(&mut self, s: &str) {
        self.indent -= 1;
        self.line(s);
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

impl Default for Doc {
    fn default() -> Self {
        Doc::new()
    }
}

/// `"key": value` with a trailing comma.
pub fn field(key: &str, value: impl AsRef<str>) -> String {
    format!("{}: {},", string(key), value.as_ref())
}

/// `"key": value` without the comma (last field).
pub fn field_last(key: &str, value: impl AsRef<str>) -> String {
    format!("{}: {}", string(key), value.as_ref())
}
