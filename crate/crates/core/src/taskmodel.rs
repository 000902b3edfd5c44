//! Transition-probability task model built from prototype experiences.
//!
//! The first prototype becomes a linear chain of states observing hotspot
//! ids (consecutive duplicates collapse into self-transitions). Further
//! experiences are integrated by a dynamic-programming alignment against
//! the model: matching a state is free, skipping a model state costs 1,
//! jumping backward to an earlier same-observation state costs 1, and
//! inserting a new state costs 2. Transition counts accumulate along the
//! aligned paths; an explicit end pseudo-state absorbs final transitions so
//! every row normalizes to 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One model state; the observation is a hotspot id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub id: usize,
    pub observation: u32,
}

/// States, transition counts, and initial counts of a task model.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskModel {
    states: Vec<State>,
    transition_counts: BTreeMap<(usize, usize), u64>,
    /// Transitions into the end pseudo-state, per state.
    end_counts: BTreeMap<usize, u64>,
    initial_counts: BTreeMap<usize, u64>,
    integrated_count: usize,
}

/// One alignment move. Consuming moves carry the 0-based experience
/// position; positions are strictly increasing across the step list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignStep {
    /// Experience element matched a state, cost 0.
    Match { pos: usize, state: usize },
    /// Experience element matched an earlier state by jumping back, cost 1.
    Jump { pos: usize, state: usize },
    /// Experience element matched nothing; a new state is required, cost 2.
    New { pos: usize, observation: u32 },
    /// A model state was passed over without consuming anything, cost 1.
    Skip { state: usize },
}

/// A minimal-cost alignment of an experience against the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub steps: Vec<AlignStep>,
    pub cost: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot build a model from zero prototypes")]
    EmptyInput,
    #[error("bad model document: {0}")]
    Document(String),
}

const COST_SKIP: u32 = 1;
const COST_JUMP: u32 = 1;
const COST_NEW: u32 = 2;

// Move priorities for breaking cost ties: match > skip > jump > new.
const PRI_MATCH: u8 = 0;
const PRI_SKIP: u8 = 1;
const PRI_JUMP: u8 = 2;
const PRI_NEW: u8 = 3;

impl TaskModel {
    /// Build a model from prototype hotspot sequences; the first becomes
    /// the baseline chain, the rest are integrated in order.
    pub fn build_baseline(prototypes: &[Vec<u32>]) -> Result<TaskModel, ModelError> {
        let first = prototypes
            .first()
            .filter(|p| !p.is_empty())
            .ok_or(ModelError::EmptyInput)?;
        let mut model = TaskModel::default();
        let mut prev: Option<usize> = None;
        for &observation in first {
            let target = match prev {
                Some(p) if model.states[p].observation == observation => p,
                _ => {
                    model.states.push(State {
                        id: model.states.len(),
                        observation,
                    });
                    model.states.len() - 1
                }
            };
            model.record_visit(prev, target);
            prev = Some(target);
        }
        *model
            .end_counts
            .entry(prev.expect("nonempty prototype"))
            .or_insert(0) += 1;
        model.integrated_count = 1;
        for sequence in &prototypes[1..] {
            model.integrate(sequence);
        }
        Ok(model)
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn integrated_count(&self) -> usize {
        self.integrated_count
    }

    pub fn transition_count(&self, from: usize, to: usize) -> u64 {
        self.transition_counts
            .get(&(from, to))
            .copied()
            .unwrap_or(0)
    }

    pub fn initial_count(&self, state: usize) -> u64 {
        self.initial_counts.get(&state).copied().unwrap_or(0)
    }

    pub fn end_count(&self, state: usize) -> u64 {
        self.end_counts.get(&state).copied().unwrap_or(0)
    }

    fn record_visit(&mut self, prev: Option<usize>, target: usize) {
        match prev {
            None => *self.initial_counts.entry(target).or_insert(0) += 1,
            Some(p) => *self.transition_counts.entry((p, target)).or_insert(0) += 1,
        }
    }

    /// Total outgoing count of a state, including its end transitions.
    fn outgoing_total(&self, state: usize) -> u64 {
        let outgoing: u64 = self
            .transition_counts
            .range((state, 0)..=(state, usize::MAX))
            .map(|(_, c)| c)
            .sum();
        outgoing + self.end_count(state)
    }

    /// Normalized transition probability between two states.
    pub fn transition_probability(&self, from: usize, to: usize) -> f64 {
        let total = self.outgoing_total(from);
        if total == 0 {
            return 0.0;
        }
        self.transition_count(from, to) as f64 / total as f64
    }

    /// Normalized probability of ending at a state.
    pub fn end_probability(&self, state: usize) -> f64 {
        let total = self.outgoing_total(state);
        if total == 0 {
            return 0.0;
        }
        self.end_count(state) as f64 / total as f64
    }

    /// Initial-state distribution.
    pub fn initial_probability(&self, state: usize) -> f64 {
        let total: u64 = self.initial_counts.values().sum();
        if total == 0 {
            return 0.0;
        }
        self.initial_count(state) as f64 / total as f64
    }

    /// Sum of incoming and outgoing probability mass of a state, the
    /// per-node saturation measure used for visualization.
    pub fn node_mass(&self, state: usize) -> f64 {
        let incoming: f64 = self.initial_probability(state)
            + self
                .states
                .iter()
                .map(|s| self.transition_probability(s.id, state))
                .sum::<f64>();
        let outgoing: f64 = self
            .states
            .iter()
            .map(|s| self.transition_probability(state, s.id))
            .sum::<f64>()
            + self.end_probability(state);
        incoming + outgoing
    }

    /// Minimal-cost alignment of a hotspot sequence against this model.
    ///
    /// Dynamic programming over (sequence position, model position); ties
    /// prefer match over skip over jump over new, then the smaller model
    /// position. The cost never exceeds 2x the sequence length.
    pub fn align(&self, sequence: &[u32]) -> Alignment {
        let m = self.states.len();
        let width = m + 1; // positions 0..=m; position j engages state j-1
        let len = sequence.len();

        #[derive(Clone, Copy)]
        struct Cell {
            cost: u32,
            priority: u8,
            prev_pos: usize,
            move_kind: u8, // 0 match fwd, 1 match self, 2 skip, 3 jump, 4 new, 255 none
        }
        const NONE: Cell = Cell {
            cost: u32::MAX,
            priority: u8::MAX,
            prev_pos: usize::MAX,
            move_kind: 255,
        };

        let mut layers: Vec<Vec<Cell>> = vec![vec![NONE; width]; len + 1];
        layers[0][0] = Cell {
            cost: 0,
            priority: 0,
            prev_pos: usize::MAX,
            move_kind: 255,
        };

        let relax = |cell: &mut Cell, cost: u32, priority: u8, prev_pos: usize, move_kind: u8| {
            if cost < cell.cost
                || (cost == cell.cost && (priority, prev_pos) < (cell.priority, cell.prev_pos))
            {
                *cell = Cell {
                    cost,
                    priority,
                    prev_pos,
                    move_kind,
                };
            }
        };

        // Skip closure within a layer: one left-to-right pass.
        let skip_pass = |layer: &mut Vec<Cell>| {
            for j in 0..m {
                if layer[j].cost == u32::MAX {
                    continue;
                }
                let cost = layer[j].cost + COST_SKIP;
                let cell = &mut layer[j + 1];
                if cost < cell.cost
                    || (cost == cell.cost && (PRI_SKIP, j) < (cell.priority, cell.prev_pos))
                {
                    *cell = Cell {
                        cost,
                        priority: PRI_SKIP,
                        prev_pos: j,
                        move_kind: 2,
                    };
                }
            }
        };

        skip_pass(&mut layers[0]);
        for i in 0..len {
            let observation = sequence[i];
            let (done, rest) = layers.split_at_mut(i + 1);
            let current = &done[i];
            let next = &mut rest[0];
            for j in 0..width {
                if current[j].cost == u32::MAX {
                    continue;
                }
                let cost = current[j].cost;
                // Forward match into state j.
                if j < m && self.states[j].observation == observation {
                    relax(&mut next[j + 1], cost, PRI_MATCH, j, 0);
                }
                // Self match: stay on state j-1.
                if j >= 1 && self.states[j - 1].observation == observation {
                    relax(&mut next[j], cost, PRI_MATCH, j, 1);
                }
                // Backward jump to any earlier same-observation state.
                for (idx, state) in self.states[..j.saturating_sub(1)].iter().enumerate() {
                    if state.observation == observation {
                        relax(&mut next[idx + 1], cost + COST_JUMP, PRI_JUMP, j, 3);
                    }
                }
                // New state, position unchanged.
                relax(&mut next[j], cost + COST_NEW, PRI_NEW, j, 4);
            }
            skip_pass(next);
        }

        // Final: cheapest cost at any model position, smallest position first.
        let mut end_pos = 0;
        for j in 0..width {
            if layers[len][j].cost < layers[len][end_pos].cost {
                end_pos = j;
            }
        }

        // Backtrack.
        let mut steps = Vec::new();
        let mut i = len;
        let mut j = end_pos;
        while !(i == 0 && layers[i][j].move_kind == 255) {
            let cell = layers[i][j];
            match cell.move_kind {
                0 => {
                    steps.push(AlignStep::Match {
                        pos: i - 1,
                        state: j - 1,
                    });
                    i -= 1;
                }
                1 => {
                    steps.push(AlignStep::Match {
                        pos: i - 1,
                        state: j - 1,
                    });
                    i -= 1;
                }
                2 => {
                    steps.push(AlignStep::Skip { state: j - 1 });
                }
                3 => {
                    steps.push(AlignStep::Jump {
                        pos: i - 1,
                        state: j - 1,
                    });
                    i -= 1;
                }
                4 => {
                    steps.push(AlignStep::New {
                        pos: i - 1,
                        observation: sequence[i - 1],
                    });
                    i -= 1;
                }
                _ => unreachable!("backtrack reached an unvisited cell"),
            }
            j = cell.prev_pos;
        }
        steps.reverse();
        Alignment {
            steps,
            cost: layers[len][end_pos].cost,
        }
    }

    /// Align an experience and absorb it: new states are created for NEW
    /// steps (consecutive same-observation NEWs collapse into self-loops),
    /// counts are incremented along the aligned path.
    pub fn integrate(&mut self, sequence: &[u32]) -> Alignment {
        let alignment = self.align(sequence);
        let mut prev: Option<usize> = None;
        for step in &alignment.steps {
            let target = match *step {
                AlignStep::Match { state, .. } | AlignStep::Jump { state, .. } => state,
                AlignStep::New { observation, .. } => {
                    match prev {
                        // The alignment cannot see states it just created, so
                        // a repeated new observation collapses to a self-loop.
                        Some(p) if self.states[p].observation == observation => p,
                        _ => {
                            self.states.push(State {
                                id: self.states.len(),
                                observation,
                            });
                            self.states.len() - 1
                        }
                    }
                }
                AlignStep::Skip { .. } => continue,
            };
            self.record_visit(prev, target);
            prev = Some(target);
        }
        if let Some(last) = prev {
            *self.end_counts.entry(last).or_insert(0) += 1;
        }
        self.integrated_count += 1;
        alignment
    }

    /// GraphViz DOT rendering with normalized edge probabilities and
    /// per-node in+out probability mass.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        writeln!(out, "digraph task_model {{").unwrap();
        writeln!(out, "    rankdir=LR;").unwrap();
        writeln!(out, "    start [shape=point];").unwrap();
        writeln!(out, "    end [shape=doublecircle label=\"end\"];").unwrap();
        for s in &self.states {
            writeln!(
                out,
                "    s{} [label=\"h{}\\nmass={:.3}\"];",
                s.id,
                s.observation,
                self.node_mass(s.id)
            )
            .unwrap();
        }
        for &state in self.initial_counts.keys() {
            writeln!(
                out,
                "    start -> s{} [label=\"{:.3}\"];",
                state,
                self.initial_probability(state)
            )
            .unwrap();
        }
        for &(from, to) in self.transition_counts.keys() {
            writeln!(
                out,
                "    s{} -> s{} [label=\"{:.3}\"];",
                from,
                to,
                self.transition_probability(from, to)
            )
            .unwrap();
        }
        for &state in self.end_counts.keys() {
            writeln!(
                out,
                "    s{} -> end [label=\"{:.3}\"];",
                state,
                self.end_probability(state)
            )
            .unwrap();
        }
        writeln!(out, "}}").unwrap();
        out
    }

    /// JSON document with raw counts (round-trippable) plus normalized
    /// probabilities and node masses for rendering.
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            states: self
                .states
                .iter()
                .map(|s| DocumentState {
                    id: s.id,
                    observation: s.observation,
                    mass: self.node_mass(s.id),
                })
                .collect(),
            initial_counts: self.initial_counts.iter().map(|(&s, &c)| (s, c)).collect(),
            transitions: self
                .transition_counts
                .iter()
                .map(|(&(from, to), &count)| DocumentTransition {
                    from,
                    to,
                    count,
                    probability: self.transition_probability(from, to),
                })
                .collect(),
            end_counts: self.end_counts.iter().map(|(&s, &c)| (s, c)).collect(),
            integrated_count: self.integrated_count,
        }
    }

    /// Rebuild a model from its exported document; counts are preserved.
    pub fn from_document(doc: &ModelDocument) -> Result<TaskModel, ModelError> {
        let n = doc.states.len();
        for (i, s) in doc.states.iter().enumerate() {
            if s.id != i {
                return Err(ModelError::Document(format!(
                    "state ids must be dense, found {} at {i}",
                    s.id
                )));
            }
        }
        let check = |s: usize| -> Result<usize, ModelError> {
            if s < n {
                Ok(s)
            } else {
                Err(ModelError::Document(format!("state {s} out of range")))
            }
        };
        let mut model = TaskModel {
            states: doc
                .states
                .iter()
                .map(|s| State {
                    id: s.id,
                    observation: s.observation,
                })
                .collect(),
            ..TaskModel::default()
        };
        for &(s, c) in &doc.initial_counts {
            model.initial_counts.insert(check(s)?, c);
        }
        for t in &doc.transitions {
            model
                .transition_counts
                .insert((check(t.from)?, check(t.to)?), t.count);
        }
        for &(s, c) in &doc.end_counts {
            model.end_counts.insert(check(s)?, c);
        }
        model.integrated_count = doc.integrated_count;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentState {
    pub id: usize,
    pub observation: u32,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTransition {
    pub from: usize,
    pub to: usize,
    pub count: u64,
    pub probability: f64,
}

/// On-disk model representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub states: Vec<DocumentState>,
    pub initial_counts: Vec<(usize, u64)>,
    pub transitions: Vec<DocumentTransition>,
    pub end_counts: Vec<(usize, u64)>,
    pub integrated_count: usize,
}
