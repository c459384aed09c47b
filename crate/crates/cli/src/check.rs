use serde::{Deserialize, Serialize};

/// One asserted quantity with its requirement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Statement the check exercises, used to group the verify matrix.
    pub statement: String,
    pub measured: f64,
    pub required: String,
    pub pass: bool,
}

/// Builds checks for one statement, applying the global tolerance multiplier.
pub struct Checks {
    statement: String,
    scale: f64,
    pub list: Vec<Check>,
}

impl Checks {
    pub fn new(statement: &str, scale: f64) -> Self {
        Self { statement: statement.to_string(), scale, list: Vec::new() }
    }

    pub fn statement(&mut self, statement: &str) -> &mut Self {
        self.statement = statement.to_string();
        self
    }

    fn push(&mut self, name: &str, measured: f64, required: String, pass: bool) {
        self.list.push(Check { name: name.to_string(), statement: self.statement.clone(), measured, required, pass });
    }

    /// `measured <= limit * scale`.
    pub fn at_most(&mut self, name: &str, measured: f64, limit: f64) {
        let limit = limit * self.scale;
        self.push(name, measured, format!("<= {limit:.6e}"), measured <= limit);
    }

    /// `measured >= limit / scale`.
    pub fn at_least(&mut self, name: &str, measured: f64, limit: f64) {
        let limit = limit / self.scale;
        self.push(name, measured, format!(">= {limit:.6e}"), measured >= limit);
    }

    /// `lo <= measured <= hi`, widened about the midpoint by the scale.
    pub fn within(&mut self, name: &str, measured: f64, lo: f64, hi: f64) {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) * self.scale;
        let (lo, hi) = (mid - half, mid + half);
        self.push(name, measured, format!("in [{lo:.6e}, {hi:.6e}]"), measured >= lo && measured <= hi);
    }

    /// Exact equality, for constants that are pure arithmetic.
    pub fn equal(&mut self, name: &str, measured: f64, expected: f64) {
        self.push(name, measured, format!("== {expected:.16e}"), measured == expected);
    }

    /// A property with no natural scalar; `measured` is 1 or 0.
    pub fn holds(&mut self, name: &str, ok: bool) {
        self.push(name, if ok { 1.0 } else { 0.0 }, "holds".to_string(), ok);
    }

    pub fn extend(&mut self, other: Checks) {
        self.list.extend(other.list);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_loosens_every_kind_of_bound() {
        let mut c = Checks::new("s", 10.0);
        c.at_most("a", 0.5, 0.1);
        c.at_least("b", 0.2, 1.0);
        c.within("c", 1.4, 0.9, 1.1);
        c.equal("d", 1.0, 1.0);
        assert!(c.list.iter().all(|x| x.pass), "{:?}", c.list);
        let mut strict = Checks::new("s", 1.0);
        strict.at_most("a", 0.5, 0.1);
        strict.within("c", 1.4, 0.9, 1.1);
        strict.holds("e", false);
        assert!(strict.list.iter().all(|x| !x.pass));
    }

    #[test]
    fn statement_switch_applies_to_later_checks() {
        let mut c = Checks::new("first", 1.0);
        c.holds("a", true);
        c.statement("second").holds("b", true);
        assert_eq!(c.list[0].statement, "first");
        assert_eq!(c.list[1].statement, "second");
    }
}
