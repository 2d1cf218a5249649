//! Token counting for every budget decision in the engine.
//!
//! The builtin counter treats each maximal run of alphanumeric characters as
//! one token and each remaining non-whitespace character as its own token.
//! Whitespace never counts. Backend-specific tokenizers can be plugged in as
//! a counting function.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

pub const DEFAULT_SAFETY_MARGIN: f64 = 1.3;

type CountFn = dyn Fn(&str) -> usize + Send + Sync;

#[derive(Clone)]
pub enum CounterKind {
    Builtin,
    /// Counting function supplied by a model backend.
    Backend(Arc<CountFn>),
}

impl fmt::Debug for CounterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CounterKind::Builtin => f.write_str("Builtin"),
            CounterKind::Backend(_) => f.write_str("Backend(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TokenCounter {
    kind: CounterKind,
    safety_margin: f64,
}

impl Default for TokenCounter {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TokenCounter {
    /// Builtin counter with the default 1.3 budgeting margin.
    pub fn builtin() -> Self {
        Self {
            kind: CounterKind::Builtin,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        }
    }

    pub fn backend<F>(count: F) -> Self
    where
        F: Fn(&str) -> usize + Send + Sync + 'static,
    {
        Self {
            kind: CounterKind::Backend(Arc::new(count)),
            safety_margin: 1.0,
        }
    }

    /// Replaces the margin; values below 1.0 (or non-finite) are clamped to 1.0.
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.safety_margin = if margin.is_finite() && margin >= 1.0 {
            margin
        } else {
            1.0
        };
        self
    }

    pub fn kind(&self) -> &CounterKind {
        &self.kind
    }

    pub fn safety_margin(&self) -> f64 {
        self.safety_margin
    }

    pub fn count(&self, text: &str) -> usize {
        match &self.kind {
            CounterKind::Builtin => count_builtin(text),
            CounterKind::Backend(f) => f(text),
        }
    }

    /// Count of `text[range]` from the counts of its halves either side of
    /// `mid`. The builtin counter only needs the half counts; backend
    /// counters rescan the whole range and never call them.
    pub fn count_concat(
        &self,
        text: &str,
        range: Range<usize>,
        mid: usize,
        head: impl FnOnce() -> usize,
        tail: impl FnOnce() -> usize,
    ) -> usize {
        match &self.kind {
            CounterKind::Builtin => {
                let joins = text[range.start..mid]
                    .chars()
                    .next_back()
                    .is_some_and(char::is_alphanumeric)
                    && text[mid..range.end].chars().next().is_some_and(char::is_alphanumeric);
                head() + tail() - usize::from(joins)
            }
            CounterKind::Backend(f) => f(&text[range]),
        }
    }

    /// `ceil(count × margin)`, for checks against the NLI window only.
    pub fn budgeted_count(&self, text: &str) -> usize {
        self.apply_margin(self.count(text))
    }

    pub fn apply_margin(&self, count: usize) -> usize {
        if self.safety_margin == 1.0 || count == 0 {
            return count;
        }
        let scaled = count as f64 * self.safety_margin;
        // 10 × 1.3 is 13.000000000000002 in binary floating point.
        (scaled - 1e-9).ceil().max(0.0) as usize
    }

    /// Longest prefix of `text`, cut at a builtin token end, whose budgeted
    /// count is at most `max_budgeted`.
    pub fn truncate_to_budget<'a>(&self, text: &'a str, max_budgeted: usize) -> &'a str {
        if self.budgeted_count(text) <= max_budgeted {
            return text;
        }
        let ends: Vec<usize> = builtin_token_spans(text).map(|r| r.end).collect();
        // budgeted_count is monotone over prefixes for the builtin counter and
        // assumed so for backend counters.
        let (mut lo, mut hi) = (0usize, ends.len());
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.budgeted_count(&text[..ends[mid - 1]]) <= max_budgeted {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        if lo == 0 {
            ""
        } else {
            &text[..ends[lo - 1]]
        }
    }
}

pub fn count_builtin(text: &str) -> usize {
    let mut count = 0;
    let mut in_run = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            count += usize::from(!in_run);
            in_run = true;
        } else {
            count += usize::from(!c.is_whitespace());
            in_run = false;
        }
    }
    count
}

/// Byte ranges of builtin tokens, in order.
pub fn builtin_token_spans(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || loop {
        let (start, c) = chars.next()?;
        if c.is_whitespace() {
            continue;
        }
        let mut end = start + c.len_utf8();
        if c.is_alphanumeric() {
            while let Some(&(i, next)) = chars.peek() {
                if !next.is_alphanumeric() {
                    break;
                }
                end = i + next.len_utf8();
                chars.next();
            }
        }
        return Some(start..end);
    })
}
