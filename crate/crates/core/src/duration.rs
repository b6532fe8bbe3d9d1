//! Tick durations in config files: a plain integer (minutes) or a string
//! with a unit suffix, `m`, `h` or `d`. Always written back as an integer.

use serde::{de, Deserializer};

use crate::domain::Tick;

pub const HOUR: Tick = 60;
pub const DAY: Tick = 24 * HOUR;

pub fn parse(s: &str) -> Result<Tick, String> {
    let s = s.trim();
    let (num, unit) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => (&s[..i], c),
        _ => (s, 'm'),
    };
    let n: Tick = num.trim().parse().map_err(|_| format!("bad duration `{s}`"))?;
    let mul = match unit {
        'm' => 1,
        'h' => HOUR,
        'd' => DAY,
        other => return Err(format!("unknown duration unit `{other}` in `{s}`")),
    };
    n.checked_mul(mul).ok_or_else(|| format!("duration `{s}` overflows"))
}

struct TicksVisitor;

impl de::Visitor<'_> for TicksVisitor {
    type Value = Tick;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("a tick count or a duration like \"3d\"")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Tick, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Tick, E> {
        u64::try_from(v).map_err(|_| E::custom("duration must not be negative"))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Tick, E> {
        parse(v).map_err(E::custom)
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Tick, D::Error> {
    d.deserialize_any(TicksVisitor)
}

pub mod option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::domain::Tick;

    #[derive(Deserialize)]
    struct W(#[serde(deserialize_with = "super::deserialize")] Tick);

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Tick>, D::Error> {
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }

    pub fn serialize<S: Serializer>(v: &Option<Tick>, s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        assert_eq!(parse("90"), Ok(90));
        assert_eq!(parse("10h"), Ok(600));
        assert_eq!(parse("3d"), Ok(4320));
        assert_eq!(parse("5m"), Ok(5));
        assert!(parse("3w").is_err());
        assert!(parse("h").is_err());
    }
}
