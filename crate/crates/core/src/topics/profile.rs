use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopicalityClass {
    Topical,
    Middle,
    NonTopical,
}

impl TopicalityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TopicalityClass::Topical => "topical",
            TopicalityClass::Middle => "middle",
            TopicalityClass::NonTopical => "non-topical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "topical" => Some(TopicalityClass::Topical),
            "middle" => Some(TopicalityClass::Middle),
            "non-topical" | "nontopical" => Some(TopicalityClass::NonTopical),
            _ => None,
        }
    }
}

impl fmt::Display for TopicalityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    User,
    Hashtag,
    Url,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::User => "user",
            EntityKind::Hashtag => "hashtag",
            EntityKind::Url => "url",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "user" => Some(EntityKind::User),
            "hashtag" => Some(EntityKind::Hashtag),
            "url" => Some(EntityKind::Url),
            _ => None,
        }
    }
}

/// A topic distribution on the K-simplex with its entropy (nats) and class.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicalProfile {
    pub theta: Vec<f64>,
    pub entropy: f64,
    pub class: TopicalityClass,
}

impl TopicalProfile {
    /// Normalizes `weights` onto the simplex. Returns `None` for empty or all-zero input.
    pub fn from_weights(weights: Vec<f64>) -> Option<TopicalProfile> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return None;
        }
        let theta: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        Some(TopicalProfile {
            entropy: entropy(&theta),
            theta,
            class: TopicalityClass::Middle,
        })
    }

    pub fn topics(&self) -> usize {
        self.theta.len()
    }
}

/// Shannon entropy in nats, with 0·ln 0 = 0.
pub fn entropy(theta: &[f64]) -> f64 {
    let h: f64 = theta
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Cosine similarity of two non-negative topic vectors, in [0, 1].
pub fn alignment(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub classes: Vec<TopicalityClass>,
    /// Entropy at or below which a profile is topical.
    pub topical_threshold: f64,
    /// Entropy at or above which a profile is non-topical.
    pub non_topical_threshold: f64,
    /// Every entropy is identical.
    pub degenerate: bool,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Lowest-entropy `q` share topical, highest-entropy `q` share non-topical.
/// Run separately for each population (users, hashtags, URLs).
pub fn classify_topicality(entropies: &[f64], q: f64) -> Result<Classification> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::config(format!("quantile {q} outside (0, 0.5]")));
    }
    let needed = (1.0 / q).ceil() as usize;
    if entropies.len() < needed {
        return Err(Error::data(format!(
            "{} profiles cannot be split at quantile {q}; need at least {needed}",
            entropies.len()
        )));
    }
    let mut sorted = entropies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let low = quantile_sorted(&sorted, q);
    let high = quantile_sorted(&sorted, 1.0 - q);
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    if degenerate {
        log::warn!("all {} entropies are identical; every profile is classed topical", sorted.len());
    }
    let classes = entropies
        .iter()
        .map(|&h| {
            if h <= low {
                TopicalityClass::Topical
            } else if h >= high {
                TopicalityClass::NonTopical
            } else {
                TopicalityClass::Middle
            }
        })
        .collect();
    Ok(Classification {
        classes,
        topical_threshold: low,
        non_topical_threshold: high,
        degenerate,
    })
}

/// One row of the profile CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub entity_id: String,
    pub kind: EntityKind,
    pub profile: TopicalProfile,
}

/// CSV `entity_id,kind,entropy,class,theta_0,…,theta_{K-1}`.
pub fn write_profiles_csv<W: Write>(mut w: W, rows: &[ProfileRow]) -> std::io::Result<()> {
    let k = rows.first().map_or(0, |r| r.profile.topics());
    write!(w, "entity_id,kind,entropy,class")?;
    for i in 0..k {
        write!(w, ",theta_{i}")?;
    }
    writeln!(w)?;
    for r in rows {
        write!(
            w,
            "{},{},{:.9},{}",
            r.entity_id,
            r.kind.as_str(),
            r.profile.entropy,
            r.profile.class
        )?;
        for p in &r.profile.theta {
            write!(w, ",{p:.9e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_profiles_csv<R: BufRead>(r: R) -> Result<Vec<ProfileRow>> {
    let mut rows = Vec::new();
    let mut k = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if k.is_none() {
            if line.starts_with('#') {
                continue;
            }
            if !line.starts_with("entity_id,kind,entropy,class") {
                return Err(bad("missing profile CSV header".into()));
            }
            k = Some(line.split(',').count() - 4);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let k = k.unwrap_or(0);
        if fields.len() != 4 + k {
            return Err(bad(format!("expected {} fields, found {}", 4 + k, fields.len())));
        }
        let kind = EntityKind::parse(fields[1]).ok_or_else(|| bad(format!("bad kind {:?}", fields[1])))?;
        let class =
            TopicalityClass::parse(fields[3]).ok_or_else(|| bad(format!("bad class {:?}", fields[3])))?;
        let theta = fields[4..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        let mut profile =
            TopicalProfile::from_weights(theta).ok_or_else(|| bad("theta is not a distribution".into()))?;
        profile.class = class;
        rows.push(ProfileRow {
            entity_id: fields[0].to_owned(),
            kind,
            profile,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_closed_forms() {
        let uniform = vec![0.01; 100];
        assert!((entropy(&uniform) - 100f64.ln()).abs() < 1e-9);
        let mut one_hot = vec![0.0; 100];
        one_hot[3] = 1.0;
        assert_eq!(entropy(&one_hot), 0.0);
        let mut half = vec![0.0; 10];
        half[0] = 0.5;
        half[1] = 0.5;
        assert!((entropy(&half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn alignment_closed_forms() {
        assert!((alignment(&[0.5, 0.5], &[1.0, 0.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let mut a = vec![0.0; 10];
        let mut b = vec![0.0; 10];
        a[3] = 1.0;
        b[7] = 1.0;
        assert_eq!(alignment(&a, &b), 0.0);
        assert!((alignment(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartile_classes() {
        let h: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
        let c = classify_topicality(&h, 0.25).unwrap();
        use TopicalityClass::*;
        assert_eq!(
            c.classes,
            vec![Topical, Topical, Middle, Middle, Middle, Middle, NonTopical, NonTopical]
        );
        assert!(!c.degenerate);
    }

    #[test]
    fn identical_entropies_are_degenerate_and_topical() {
        let c = classify_topicality(&[1.5; 6], 0.25).unwrap();
        assert!(c.degenerate);
        assert!(c.classes.iter().all(|&k| k == TopicalityClass::Topical));
    }

    #[test]
    fn half_quantile_has_no_middle() {
        let h: Vec<f64> = (0..9).map(|i| (i * 7 % 9) as f64).collect();
        let c = classify_topicality(&h, 0.5).unwrap();
        assert!(c.classes.iter().all(|&k| k != TopicalityClass::Middle));
    }

    #[test]
    fn too_few_profiles_is_an_error() {
        assert!(classify_topicality(&[1.0, 2.0, 3.0], 0.25).is_err());
        assert!(classify_topicality(&[1.0, 2.0, 3.0, 4.0], 0.25).is_ok());
        assert!(classify_topicality(&[1.0; 10], 0.0).unwrap_err().is_config());
        assert!(classify_topicality(&[1.0; 10], 0.6).is_err());
    }

    #[test]
    fn profile_csv_round_trip() {
        let mut p = TopicalProfile::from_weights(vec![1.0, 3.0]).unwrap();
        p.class = TopicalityClass::NonTopical;
        let rows = vec![
            ProfileRow { entity_id: "42".into(), kind: EntityKind::User, profile: p.clone() },
            ProfileRow { entity_id: "#iran".into(), kind: EntityKind::Hashtag, profile: p },
        ];
        let mut buf = Vec::new();
        write_profiles_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("entity_id,kind,entropy,class,theta_0,theta_1\n"));
        let back = read_profiles_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].entity_id, "#iran");
        assert_eq!(back[1].profile.class, TopicalityClass::NonTopical);
        assert!((back[0].profile.theta[1] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn leading_comments_are_skipped_but_hashtag_rows_are_kept() {
        let text = "# config_hash: ab\nentity_id,kind,entropy,class,theta_0,theta_1\n\
                    #iran,hashtag,0.5,topical,0.5,0.5\n7,user,0.5,middle,0.5,0.5\n";
        let rows = read_profiles_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].entity_id, "#iran");
        assert_eq!(rows[0].kind, EntityKind::Hashtag);
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, k).prop_filter("non-zero", |v| v.iter().sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(w in simplex(12)) {
            let p = TopicalProfile::from_weights(w).unwrap();
            prop_assert!((p.theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.entropy >= 0.0 && p.entropy <= 12f64.ln() + 1e-12);
        }

        #[test]
        fn alignment_is_symmetric(a in simplex(6), b in simplex(6)) {
            let s = alignment(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - alignment(&b, &a)).abs() < 1e-15);
            prop_assert!((alignment(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
