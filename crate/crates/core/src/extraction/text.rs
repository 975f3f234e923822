//! Text normalization and edit distance.

/// Lowercases, drops apostrophes, turns every other non-alphanumeric run
/// into a single space and trims. `"**B. Don't**"` becomes `"b dont"`.
pub fn normalize(s: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`') {
            continue;
        }
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn normalize_string(s: &str) -> String {
    normalize(s).into_iter().collect()
}

/// Word spans `[start, end)` of a normalized text.
pub fn word_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, chars.len()));
    }
    spans
}

/// Bit-parallel edit distance against a fixed pattern (Myers / Hyyrö).
/// Patterns longer than 128 characters use the two-row dynamic program.
pub struct Pattern {
    chars: Vec<char>,
    ascii: [u128; 128],
    other: Vec<(char, u128)>,
}

impl Pattern {
    pub fn new(chars: &[char]) -> Pattern {
        let mut ascii = [0u128; 128];
        let mut other: Vec<(char, u128)> = Vec::new();
        if chars.len() <= 128 {
            for (i, &c) in chars.iter().enumerate() {
                let bit = 1u128 << i;
                if (c as u32) < 128 {
                    ascii[c as usize] |= bit;
                } else if let Some(e) = other.iter_mut().find(|e| e.0 == c) {
                    e.1 |= bit;
                } else {
                    other.push((c, bit));
                }
            }
        }
        Pattern {
            chars: chars.to_vec(),
            ascii,
            other,
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    #[inline]
    fn peq(&self, c: char) -> u128 {
        if (c as u32) < 128 {
            self.ascii[c as usize]
        } else {
            self.other.iter().find(|e| e.0 == c).map_or(0, |e| e.1)
        }
    }

    /// Levenshtein distance between the pattern and `text`.
    pub fn distance(&self, text: &[char]) -> usize {
        let m = self.chars.len();
        if m == 0 {
            return text.len();
        }
        if m > 128 {
            return levenshtein(&self.chars, text);
        }
        let last = 1u128 << (m - 1);
        let mut pv: u128 = if m == 128 { !0 } else { (1u128 << m) - 1 };
        let mut mv: u128 = 0;
        let mut score = m;
        for &c in text {
            let eq = self.peq(c);
            let xv = eq | mv;
            let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
            let mut ph = mv | !(xh | pv);
            let mut mh = pv & xh;
            if ph & last != 0 {
                score += 1;
            } else if mh & last != 0 {
                score -= 1;
            }
            ph = (ph << 1) | 1;
            mh <<= 1;
            pv = mh | !(xv | ph);
            mv = ph & xv;
        }
        score
    }
}

/// Two-row Wagner–Fischer distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
