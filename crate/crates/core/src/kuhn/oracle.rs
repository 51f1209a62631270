//! Exact expected values and best responses for P1 by full tree enumeration.

use super::{terminal_payoff, Card, KuhnPeerParams, KuhnState, Move, Stage};
use crate::error::{Error, Result};

/// Probability of betting/calling at every P2 information set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct P2Table {
    /// Call probability per P2 card after P1 bets.
    pub facing_bet: [f64; 3],
    /// Bet probability per P2 card after P1 checks.
    pub after_check: [f64; 3],
}

impl From<KuhnPeerParams> for P2Table {
    fn from(p: KuhnPeerParams) -> Self {
        P2Table {
            facing_bet: [0.0, p.eta, 1.0],
            after_check: [p.xi, 0.0, 1.0],
        }
    }
}

impl P2Table {
    pub fn bet_probability(&self, card: Card, stage: Stage) -> Result<f64> {
        match stage {
            Stage::P2FacingBet => Ok(self.facing_bet[card.index()]),
            Stage::P2AfterCheck => Ok(self.after_check[card.index()]),
            s => Err(Error::usage(format!("P2 does not act at {s:?}"))),
        }
    }
}

/// P1 behavioural strategy: bet probability at the root and call
/// probability after check-bet, each indexed by P1's card.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BehavioralStrategy {
    pub root_bet: [f64; 3],
    pub call: [f64; 3],
}

impl BehavioralStrategy {
    pub fn bet_probability(&self, card: Card, stage: Stage) -> f64 {
        match stage {
            Stage::P1Root => self.root_bet[card.index()],
            Stage::P1FacingBet => self.call[card.index()],
            _ => unreachable!("P1 does not act at {stage:?}"),
        }
    }
}

/// One of the 64 deterministic P1 strategies. Bits 0..3 are root bets for
/// J, Q, K; bits 3..6 are calls after check-bet for J, Q, K.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct P1PureStrategy(u8);

impl P1PureStrategy {
    pub const COUNT: usize = 64;

    pub fn from_index(index: usize) -> Self {
        assert!(index < Self::COUNT);
        P1PureStrategy(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn root_bet(self, card: Card) -> bool {
        self.0 >> card.index() & 1 == 1
    }

    pub fn call_after_check_bet(self, card: Card) -> bool {
        self.0 >> (3 + card.index()) & 1 == 1
    }

    pub fn all() -> impl Iterator<Item = P1PureStrategy> {
        (0..Self::COUNT).map(Self::from_index)
    }

    pub fn to_behavioral(self) -> BehavioralStrategy {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        BehavioralStrategy {
            root_bet: Card::ALL.map(|c| b(self.root_bet(c))),
            call: Card::ALL.map(|c| b(self.call_after_check_bet(c))),
        }
    }
}

fn walk(state: &KuhnState, p1: &BehavioralStrategy, p2: &P2Table) -> f64 {
    let stage = state.stage();
    if stage.is_terminal() {
        return terminal_payoff(state).expect("terminal");
    }
    let p_bet = if stage.p1_to_act() {
        p1.bet_probability(state.p1_card, stage)
    } else {
        p2.bet_probability(state.p2_card, stage).expect("P2 stage")
    };
    let mut value = 0.0;
    for (mv, p) in [(Move::Bet, p_bet), (Move::Pass, 1.0 - p_bet)] {
        if p == 0.0 {
            continue;
        }
        let mut next = state.clone();
        next.apply(mv).expect("non-terminal");
        value += p * walk(&next, p1, p2);
    }
    value
}

/// Exact P1 expectation against an arbitrary P2 table, averaged over the six
/// equally likely deals.
pub fn exact_ev_against(strategy: &BehavioralStrategy, p2: &P2Table) -> f64 {
    let mut total = 0.0;
    for a in Card::ALL {
        for b in Card::ALL {
            if a != b {
                total += walk(&KuhnState::new(a, b).expect("distinct"), strategy, p2);
            }
        }
    }
    total / 6.0
}

pub fn exact_ev(strategy: &BehavioralStrategy, params: &KuhnPeerParams) -> f64 {
    exact_ev_against(strategy, &P2Table::from(*params))
}

/// Best pure response to `params`; ties go to the lowest strategy index.
pub fn best_response(params: &KuhnPeerParams) -> (f64, P1PureStrategy) {
    let mut best = (f64::NEG_INFINITY, P1PureStrategy::from_index(0));
    for s in P1PureStrategy::all() {
        let v = exact_ev(&s.to_behavioral(), params);
        if v > best.0 {
            best = (v, s);
        }
    }
    best
}
