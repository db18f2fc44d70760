//! Exhaustive solver for FLUX.
//!
//! Every ply increments the move counter and the game stops after ply 15, so
//! the reachable states form a layered DAG. The solver enumerates the layers
//! forward from the opening state and then resolves them backwards, deepest
//! layer first.
//!
//! Depth convention: the side that wins takes the fastest win, the side that
//! loses stalls for as long as possible.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::env::{Action, GameState, Role, Rules, MAX_PLIES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    /// Reachable states grouped by moves played; layer `m` holds states
    /// after `m` plies, sorted.
    layers: Vec<Vec<GameState>>,
    pub shrinker_to_move: usize,
    pub amplifier_to_move: usize,
    pub terminal: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &GameState> {
        self.layers.iter().flatten()
    }

    pub fn ongoing(&self) -> impl Iterator<Item = &GameState> {
        self.iter().filter(|s| !s.is_terminal())
    }

    pub fn to_move_count(&self, role: Role) -> usize {
        match role {
            Role::Shrinker => self.shrinker_to_move,
            Role::Amplifier => self.amplifier_to_move,
        }
    }

    /// Keys of ongoing states where `role` is to move.
    pub fn keys_for(&self, rules: &Rules, role: Role) -> HashSet<String> {
        self.ongoing()
            .filter(|s| rules.mover_at(s.moves_played()) == role)
            .map(GameState::key)
            .collect()
    }
}

/// Forward closure of the opening state under every legal action.
pub fn reachable_states(rules: &Rules) -> StateSpace {
    let root = rules.initial_state();
    let mut layers: Vec<Vec<GameState>> = vec![vec![root]];
    loop {
        let frontier = layers.last().expect("non-empty");
        let mut next: HashSet<GameState> = HashSet::new();
        for s in frontier.iter().filter(|s| !s.is_terminal()) {
            for a in s.actions_unchecked() {
                next.insert(s.apply_unchecked(a));
            }
        }
        if next.is_empty() {
            break;
        }
        let mut next: Vec<GameState> = next.into_iter().collect();
        next.sort();
        layers.push(next);
    }

    let mut space = StateSpace {
        layers,
        shrinker_to_move: 0,
        amplifier_to_move: 0,
        terminal: 0,
    };
    let (mut shrinker, mut amplifier, mut terminal) = (0, 0, 0);
    for s in space.iter() {
        if s.is_terminal() {
            terminal += 1;
        } else if rules.mover_at(s.moves_played()) == Role::Shrinker {
            shrinker += 1;
        } else {
            amplifier += 1;
        }
    }
    space.shrinker_to_move = shrinker;
    space.amplifier_to_move = amplifier;
    space.terminal = terminal;
    space
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Solution {
    pub winner: Role,
    /// Plies to the end of the game under optimal play.
    pub depth: u32,
}

#[derive(Debug, Clone)]
pub struct SolvedGame {
    rules: Rules,
    space: StateSpace,
    table: HashMap<GameState, Solution>,
}

pub fn solve(rules: &Rules) -> SolvedGame {
    let space = reachable_states(rules);
    let mut table: HashMap<GameState, Solution> = HashMap::with_capacity(space.len());
    for layer in space.layers.iter().rev() {
        for s in layer {
            let solution = match s.status().winner() {
                Some(winner) => Solution { winner, depth: 0 },
                None => {
                    let mover = rules.mover_at(s.moves_played());
                    let children = s
                        .actions_unchecked()
                        .into_iter()
                        .map(|a| table[&s.apply_unchecked(a)]);
                    resolve(mover, children)
                }
            };
            table.insert(s.clone(), solution);
        }
    }
    SolvedGame {
        rules: rules.clone(),
        space,
        table,
    }
}

fn resolve(mover: Role, children: impl Iterator<Item = Solution>) -> Solution {
    let mut fastest_win: Option<u32> = None;
    let mut slowest_loss = 0;
    for c in children {
        if c.winner == mover {
            fastest_win = Some(fastest_win.map_or(c.depth, |d| d.min(c.depth)));
        } else {
            slowest_loss = slowest_loss.max(c.depth);
        }
    }
    match fastest_win {
        Some(d) => Solution {
            winner: mover,
            depth: d + 1,
        },
        None => Solution {
            winner: mover.opponent(),
            depth: slowest_loss + 1,
        },
    }
}

impl SolvedGame {
    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, state: &GameState) -> Option<Solution> {
        self.table.get(state).copied()
    }

    pub fn value(&self, state: &GameState) -> Option<Role> {
        self.get(state).map(|s| s.winner)
    }

    pub fn initial(&self) -> Solution {
        self.table[&self.rules.initial_state()]
    }

    pub fn reachable_count(&self, role: Role) -> usize {
        self.space.to_move_count(role)
    }

    /// Fastest winning move if one exists, otherwise the move that delays
    /// the loss longest; lowest code breaks ties.
    pub fn optimal_policy(&self, state: &GameState) -> Result<Action> {
        if state.is_terminal() {
            return Err(Error::TerminalState);
        }
        if !self.table.contains_key(state) {
            return Err(Error::UnknownState(state.key()));
        }
        let mover = self.rules.mover_at(state.moves_played());
        let mut best: Option<(bool, u32, Action)> = None;
        for a in state.actions_unchecked() {
            let child = self.table[&state.apply_unchecked(a)];
            let wins = child.winner == mover;
            let better = match best {
                None => true,
                Some((best_wins, best_depth, _)) => match (wins, best_wins) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => child.depth < best_depth,
                    (false, false) => child.depth > best_depth,
                },
            };
            if better {
                best = Some((wins, child.depth, a));
            }
        }
        Ok(best.expect("ongoing state has actions").2)
    }

    /// Export: `#kind=solved` header, then `<state_key>\t<winner>,<depth>`
    /// sorted by key.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, Solution)> =
            self.table.iter().map(|(s, v)| (s.key(), *v)).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::new();
        out.push_str("#kind=solved\n");
        let _ = writeln!(out, "#first_mover={}", self.rules.first_mover);
        let _ = writeln!(out, "#states={}", rows.len());
        for (key, v) in rows {
            let _ = writeln!(out, "{key}\t{},{}", v.winner, v.depth);
        }
        out
    }
}

/// Probability that the Shrinker wins when both sides move uniformly at
/// random, for every reachable state.
#[derive(Debug, Clone)]
pub struct RandomPlayTable {
    probs: HashMap<GameState, f64>,
}

impl RandomPlayTable {
    pub fn get(&self, state: &GameState) -> Option<f64> {
        self.probs.get(state).copied()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn random_play<T, F>(space: &StateSpace, from_count: F) -> HashMap<GameState, T>
where
    T: Clone + Zero + One + std::ops::Div<Output = T>,
    F: Fn(usize) -> T,
{
    let mut probs: HashMap<GameState, T> = HashMap::with_capacity(space.len());
    for layer in space.layers.iter().rev() {
        for s in layer {
            let p = match s.status().winner() {
                Some(Role::Shrinker) => T::one(),
                Some(Role::Amplifier) => T::zero(),
                None => {
                    let actions = s.actions_unchecked();
                    let total = actions
                        .iter()
                        .map(|a| probs[&s.apply_unchecked(*a)].clone())
                        .fold(T::zero(), |acc, p| acc + p);
                    total / from_count(actions.len())
                }
            };
            probs.insert(s.clone(), p);
        }
    }
    probs
}

pub fn random_play_table(space: &StateSpace) -> RandomPlayTable {
    RandomPlayTable {
        probs: random_play(space, |n| n as f64),
    }
}

/// Exact rational version of [`random_play_table`], for auditing.
pub fn random_play_table_exact(space: &StateSpace) -> HashMap<GameState, BigRational> {
    random_play(space, |n| BigRational::from_integer(BigInt::from(n)))
}

/// Shrinker win probability under uniform random play from `state`.
pub fn random_win_prob(rules: &Rules, state: &GameState) -> Result<f64> {
    let space = reachable_states(rules);
    random_play_table(&space)
        .get(state)
        .ok_or_else(|| Error::UnknownState(state.key()))
}

/// Plies left before the tiebreak, an upper bound on any solved depth.
pub fn depth_bound(state: &GameState) -> u32 {
    MAX_PLIES - state.moves_played()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(cells: &[u32], m: u32) -> GameState {
        GameState::new(cells.to_vec(), m).unwrap()
    }

    /// Plain recursive minimax without memoisation, independent of the
    /// layered solver.
    fn brute_winner(rules: &Rules, s: &GameState) -> Role {
        if let Some(w) = s.status().winner() {
            return w;
        }
        let mover = rules.mover_at(s.moves_played());
        if s.actions_unchecked()
            .into_iter()
            .any(|a| brute_winner(rules, &s.apply_unchecked(a)) == mover)
        {
            mover
        } else {
            mover.opponent()
        }
    }

    #[test]
    fn terminal_states_have_zero_depth() {
        let rules = Rules::default();
        let solved = solve(&rules);
        for s in solved.space().iter().filter(|s| s.is_terminal()) {
            let v = solved.get(s).unwrap();
            assert_eq!(v.depth, 0);
            assert_eq!(Some(v.winner), s.status().winner());
        }
    }

    #[test]
    fn immediate_wins_have_depth_one() {
        let rules = Rules::default();
        // unreachable positions solved on their own
        let amp = Rules {
            initial_cells: vec![12, 1, 2],
            first_mover: Role::Amplifier,
        };
        let solved = solve(&amp);
        let root = amp.initial_state();
        assert_eq!(
            solved.get(&root),
            Some(Solution {
                winner: Role::Amplifier,
                depth: 1
            })
        );
        assert_eq!(solved.optimal_policy(&root).unwrap(), Action::amplify(0));

        let shr = Rules {
            initial_cells: vec![1, 4],
            ..rules
        };
        let solved = solve(&shr);
        assert_eq!(
            solved.initial(),
            Solution {
                winner: Role::Shrinker,
                depth: 1
            }
        );
        assert_eq!(
            solved.optimal_policy(&shr.initial_state()).unwrap(),
            Action::drain(0)
        );
    }

    #[test]
    fn agrees_with_brute_force_on_small_openings() {
        for (cells, first) in [
            (vec![2, 1, 3], Role::Shrinker),
            (vec![3, 3], Role::Amplifier),
            (vec![1, 2, 1, 2], Role::Shrinker),
            (vec![5, 1, 1], Role::Amplifier),
        ] {
            let rules = Rules {
                initial_cells: cells,
                first_mover: first,
            };
            let solved = solve(&rules);
            for s in solved.space().iter().step_by(7) {
                assert_eq!(solved.value(s), Some(brute_winner(&rules, s)), "{s}");
            }
        }
    }

    #[test]
    fn losing_side_stalls() {
        let rules = Rules::default();
        let solved = solve(&rules);
        let mut checked = 0;
        for s in solved.space().ongoing() {
            let mover = rules.mover_at(s.moves_played());
            let v = solved.get(s).unwrap();
            if v.winner == mover {
                continue;
            }
            let a = solved.optimal_policy(s).unwrap();
            let chosen = solved.get(&s.apply_unchecked(a)).unwrap();
            let max_child = s
                .actions_unchecked()
                .into_iter()
                .map(|a| solved.get(&s.apply_unchecked(a)).unwrap().depth)
                .max()
                .unwrap();
            assert_eq!(chosen.depth, max_child);
            assert_eq!(v.depth, max_child + 1);
            checked += 1;
            if checked > 500 {
                break;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn optimal_policy_errors() {
        let rules = Rules::default();
        let solved = solve(&rules);
        assert!(matches!(
            solved.optimal_policy(&st(&[4], 3)),
            Err(Error::TerminalState)
        ));
        assert!(matches!(
            solved.optimal_policy(&st(&[19, 1], 0)),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn depth_never_exceeds_remaining_plies() {
        let solved = solve(&Rules::default());
        for s in solved.space().iter() {
            assert!(solved.get(s).unwrap().depth <= depth_bound(s));
        }
    }

    #[test]
    fn random_play_one_ply_expansion() {
        // Amplifier to move at [12,1,2]: Amplify@0 wins outright, so at most
        // 5/6 of the mass can reach a Shrinker win.
        let rules = Rules {
            initial_cells: vec![12, 1, 2],
            first_mover: Role::Amplifier,
        };
        let space = reachable_states(&rules);
        let table = random_play_table(&space);
        let root = rules.initial_state();
        let p = table.get(&root).unwrap();
        let by_hand: f64 = root
            .actions_unchecked()
            .into_iter()
            .map(|a| table.get(&root.apply_unchecked(a)).unwrap())
            .sum::<f64>()
            / 6.0;
        assert!((p - by_hand).abs() < 1e-15);
        assert!(p <= 5.0 / 6.0);
        assert_eq!(table.get(&root.apply_unchecked(Action::amplify(0))), Some(0.0));
        assert_eq!(random_win_prob(&Rules::default(), &st(&[4], 1)).ok(), None);
    }

    #[test]
    fn exact_and_float_random_play_agree() {
        use num_traits::ToPrimitive;
        let rules = Rules::default();
        let space = reachable_states(&rules);
        let f = random_play_table(&space);
        let exact = random_play_table_exact(&space);
        let root = rules.initial_state();
        let diff = (exact[&root].to_f64().unwrap() - f.get(&root).unwrap()).abs();
        assert!(diff < 1e-12, "{diff}");
        for (s, p) in &exact {
            let p = p.to_f64().unwrap();
            assert!((0.0..=1.0).contains(&p));
            if s.is_terminal() {
                assert!(p == 0.0 || p == 1.0);
            }
        }
    }

    #[test]
    fn export_is_sorted_and_headed() {
        let rules = Rules {
            initial_cells: vec![2, 2],
            first_mover: Role::Shrinker,
        };
        let text = solve(&rules).to_text();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("#kind=solved"));
        assert_eq!(lines.next(), Some("#first_mover=shrinker"));
        let body: Vec<&str> = lines.skip(1).collect();
        let mut sorted = body.clone();
        sorted.sort();
        assert_eq!(body, sorted);
        assert!(body.iter().any(|l| l.starts_with("2,2|0\t")));
    }
}
