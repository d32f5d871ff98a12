//! Step accounting shared by engine runs and scripted data movement.

/// Deterministic cost record for a mesh computation.
///
/// Counting rules: every global step advances `total_steps` and
/// `compute_steps` (an idle compute sub-step still burns the cycle);
/// `comm_steps` counts only steps in which at least one word crossed a link,
/// so `total_steps = max(comm_steps, compute_steps)` always holds.
/// `peak_words` is the high-water mark of resident register words plus words
/// in flight on links; relay words in flight are exempt from per-processor
/// register budgets but are charged here.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepLedger {
    pub total_steps: u64,
    pub comm_steps: u64,
    pub compute_steps: u64,
    /// Total word-hops: each word crossing one link in one step counts once.
    pub words_moved: u64,
    pub peak_words: u64,
    pub processors: u64,
    /// Labeled step counts in order of first appearance.
    pub per_phase: Vec<(String, u64)>,
}

impl StepLedger {
    pub fn new(processors: u64) -> Self {
        StepLedger { processors, ..Default::default() }
    }

    /// Attribute `steps` additional steps to the named phase.
    pub fn note_phase_steps(&mut self, label: &str, steps: u64) {
        if steps == 0 {
            return;
        }
        if let Some(entry) = self.per_phase.iter_mut().find(|(l, _)| l == label) {
            entry.1 += steps;
        } else {
            self.per_phase.push((label.to_string(), steps));
        }
    }

    pub fn phase_steps(&self, label: &str) -> u64 {
        self.per_phase
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, s)| *s)
            .unwrap_or(0)
    }

    /// Append a computation that runs after this one on the same mesh.
    pub fn add_sequential(&mut self, other: &StepLedger) {
        self.total_steps += other.total_steps;
        self.comm_steps += other.comm_steps;
        self.compute_steps += other.compute_steps;
        self.words_moved += other.words_moved;
        self.peak_words = self.peak_words.max(other.peak_words);
        self.processors = self.processors.max(other.processors);
        for (label, steps) in &other.per_phase {
            self.note_phase_steps(label, *steps);
        }
    }

    /// Fold in a computation running concurrently on a disjoint region.
    ///
    /// Steps take the maximum (the regions run in lockstep), traffic adds,
    /// and peaks add because both regions hold their words at once.
    pub fn add_concurrent(&mut self, other: &StepLedger) {
        self.total_steps = self.total_steps.max(other.total_steps);
        self.comm_steps = self.comm_steps.max(other.comm_steps);
        self.compute_steps = self.compute_steps.max(other.compute_steps);
        self.words_moved += other.words_moved;
        self.peak_words += other.peak_words;
        self.processors = self.processors.max(other.processors);
        for (label, steps) in &other.per_phase {
            let cur = self.phase_steps(label);
            if *steps > cur {
                if let Some(entry) = self.per_phase.iter_mut().find(|(l, _)| l == label) {
                    entry.1 = *steps;
                } else {
                    self.per_phase.push((label.clone(), *steps));
                }
            } else if cur == 0 && *steps == 0 {
                // keep label ordering stable even for empty phases
            }
        }
    }

    /// Render as sorted `key=value` lines (one per line, trailing newline).
    pub fn emit(&self) -> String {
        let mut lines = vec![
            format!("comm_steps={}", self.comm_steps),
            format!("compute_steps={}", self.compute_steps),
            format!("peak_words={}", self.peak_words),
            format!("processors={}", self.processors),
            format!("total_steps={}", self.total_steps),
            format!("words_moved={}", self.words_moved),
        ];
        for (label, steps) in &self.per_phase {
            lines.push(format!("phase:{}={}", label, steps));
        }
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(total: u64, comm: u64, moved: u64, peak: u64) -> StepLedger {
        StepLedger {
            total_steps: total,
            comm_steps: comm,
            compute_steps: total,
            words_moved: moved,
            peak_words: peak,
            processors: 16,
            per_phase: vec![("work".into(), total)],
        }
    }

    #[test]
    fn sequential_merge_adds_steps_and_keeps_peak_max() {
        let mut a = sample(10, 6, 40, 100);
        a.add_sequential(&sample(5, 5, 10, 80));
        assert_eq!(a.total_steps, 15);
        assert_eq!(a.comm_steps, 11);
        assert_eq!(a.words_moved, 50);
        assert_eq!(a.peak_words, 100);
        assert_eq!(a.phase_steps("work"), 15);
    }

    #[test]
    fn concurrent_merge_takes_step_max_and_adds_peaks() {
        let mut a = sample(10, 6, 40, 100);
        a.add_concurrent(&sample(12, 3, 10, 80));
        assert_eq!(a.total_steps, 12);
        assert_eq!(a.comm_steps, 6);
        assert_eq!(a.words_moved, 50);
        assert_eq!(a.peak_words, 180);
        assert_eq!(a.phase_steps("work"), 12);
    }

    #[test]
    fn emit_is_sorted_and_stable() {
        let mut l = sample(3, 1, 2, 9);
        l.note_phase_steps("combine", 2);
        let text = l.emit();
        let again = l.emit();
        assert_eq!(text, again);
        let lines: Vec<&str> = text.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        assert!(text.contains("total_steps=3\n"));
        assert!(text.contains("phase:combine=2\n"));
    }
}
