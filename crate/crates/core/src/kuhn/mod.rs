//! Kuhn Poker with the ego agent as P1 and a two-parameter rule-based P2.
//!
//! P2 plays the simplified table left after removing dominated choices:
//!
//! | P2 card | facing a bet       | after a check     |
//! |---------|--------------------|-------------------|
//! | J       | fold               | bet with prob. ξ  |
//! | Q       | call with prob. η  | check             |
//! | K       | call               | bet               |

mod oracle;

pub use oracle::{
    best_response, exact_ev, exact_ev_against, BehavioralStrategy, P1PureStrategy, P2Table,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EnvKind, Environment, Observation, StepOutcome};
use crate::rng::Stream;

pub const OBS_DIM: usize = 13;
pub const NUM_ACTIONS: usize = 2;
pub const NUM_STAGES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Card {
    Jack = 0,
    Queen = 1,
    King = 2,
}

impl Card {
    pub const ALL: [Card; 3] = [Card::Jack, Card::Queen, Card::King];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Card {
        Card::ALL[i]
    }
}

/// Both players' moves share one alphabet: `Pass` is check or fold, `Bet` is
/// bet or call. Ego action id 0 is `Pass`, 1 is `Bet`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Pass = 0,
    Bet = 1,
}

impl Move {
    pub fn from_action(id: usize) -> Result<Move> {
        match id {
            0 => Ok(Move::Pass),
            1 => Ok(Move::Bet),
            _ => Err(Error::usage(format!("kuhn action id {id} out of range"))),
        }
    }
}

/// Position in the game tree; the discriminant is the one-hot index used by
/// the observation encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    P1Root = 0,
    P2FacingBet = 1,
    P2AfterCheck = 2,
    P1FacingBet = 3,
    Fold = 4,
    ShowdownBet = 5,
    ShowdownCheck = 6,
}

impl Stage {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Fold | Stage::ShowdownBet | Stage::ShowdownCheck)
    }

    pub fn is_showdown(self) -> bool {
        matches!(self, Stage::ShowdownBet | Stage::ShowdownCheck)
    }

    pub fn p1_to_act(self) -> bool {
        matches!(self, Stage::P1Root | Stage::P1FacingBet)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KuhnState {
    pub p1_card: Card,
    pub p2_card: Card,
    history: Vec<Move>,
    stage: Stage,
}

impl KuhnState {
    pub fn new(p1_card: Card, p2_card: Card) -> Result<Self> {
        if p1_card == p2_card {
            return Err(Error::usage("both players hold the same card"));
        }
        Ok(KuhnState {
            p1_card,
            p2_card,
            history: Vec::with_capacity(3),
            stage: Stage::P1Root,
        })
    }

    pub fn history(&self) -> &[Move] {
        &self.history
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn is_terminal(&self) -> bool {
        self.stage.is_terminal()
    }

    /// Applies the move of whichever player is to act.
    pub fn apply(&mut self, mv: Move) -> Result<()> {
        use Move::*;
        use Stage::*;
        let next = match (self.stage, mv) {
            (P1Root, Bet) => P2FacingBet,
            (P1Root, Pass) => P2AfterCheck,
            (P2FacingBet, Bet) => ShowdownBet,
            (P2FacingBet, Pass) => Fold,
            (P2AfterCheck, Bet) => P1FacingBet,
            (P2AfterCheck, Pass) => ShowdownCheck,
            (P1FacingBet, Bet) => ShowdownBet,
            (P1FacingBet, Pass) => Fold,
            (s, _) => return Err(Error::usage(format!("no move available at terminal stage {s:?}"))),
        };
        self.history.push(mv);
        self.stage = next;
        Ok(())
    }
}

/// `[stage one-hot (7) | own card (3) | opponent card (3)]`, with the
/// opponent slot left at zero unless the hand ended in a showdown.
pub fn encode_obs(state: &KuhnState) -> Observation {
    let mut v = vec![0.0; OBS_DIM];
    v[state.stage.index()] = 1.0;
    v[NUM_STAGES + state.p1_card.index()] = 1.0;
    if state.stage.is_showdown() {
        v[NUM_STAGES + 3 + state.p2_card.index()] = 1.0;
    }
    Observation::from_finite(v)
}

/// P1's reward at a terminal state.
pub fn terminal_payoff(state: &KuhnState) -> Result<f64> {
    let p1_wins_showdown = state.p1_card > state.p2_card;
    let sign = |p1_wins: bool| if p1_wins { 1.0 } else { -1.0 };
    match state.stage {
        Stage::ShowdownCheck => Ok(sign(p1_wins_showdown)),
        Stage::ShowdownBet => Ok(2.0 * sign(p1_wins_showdown)),
        // A fold after one bet: whoever made the last bet wins.
        Stage::Fold => Ok(sign(state.history.len() == 2)),
        s => Err(Error::usage(format!("payoff requested at non-terminal stage {s:?}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KuhnPeerParams {
    /// Probability of betting a Jack after P1 checks.
    pub xi: f64,
    /// Probability of calling with a Queen after P1 bets.
    pub eta: f64,
}

impl KuhnPeerParams {
    pub fn new(xi: f64, eta: f64) -> Result<Self> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(xi) || !ok(eta) {
            return Err(Error::usage(format!("kuhn peer params ({xi}, {eta}) outside [0,1]")));
        }
        Ok(KuhnPeerParams { xi, eta })
    }

    /// Probability that P2 bets (or calls) with `card` at `stage`.
    pub fn bet_probability(&self, card: Card, stage: Stage) -> Result<f64> {
        P2Table::from(*self).bet_probability(card, stage)
    }
}

/// Samples P2's move. Errors unless P2 is to act.
pub fn p2_action(params: &KuhnPeerParams, card: Card, history: &[Move], rng: &mut Stream) -> Result<Move> {
    let stage = match history {
        [Move::Bet] => Stage::P2FacingBet,
        [Move::Pass] => Stage::P2AfterCheck,
        _ => return Err(Error::usage("it is not P2's turn")),
    };
    let p = params.bet_probability(card, stage)?;
    Ok(if rng.gen::<f64>() < p { Move::Bet } else { Move::Pass })
}

/// Kuhn Poker from P1's seat against a fixed P2.
#[derive(Clone, Debug)]
pub struct KuhnEnv {
    peer: KuhnPeerParams,
    state: Option<KuhnState>,
}

impl KuhnEnv {
    pub fn new(peer: KuhnPeerParams) -> Self {
        KuhnEnv { peer, state: None }
    }

    pub fn peer(&self) -> KuhnPeerParams {
        self.peer
    }

    pub fn set_peer(&mut self, peer: KuhnPeerParams) {
        self.peer = peer;
    }

    pub fn state(&self) -> Option<&KuhnState> {
        self.state.as_ref()
    }

    /// Starts from a given deal instead of a random one.
    pub fn reset_with(&mut self, p1_card: Card, p2_card: Card) -> Result<Observation> {
        let state = KuhnState::new(p1_card, p2_card)?;
        let obs = encode_obs(&state);
        self.state = Some(state);
        Ok(obs)
    }
}

impl Environment for KuhnEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Kuhn
    }

    fn reset(&mut self, rng: &mut Stream) -> Observation {
        let mut deck = Card::ALL;
        deck.shuffle(rng);
        self.reset_with(deck[0], deck[1]).expect("distinct cards")
    }

    fn step(&mut self, action: usize, rng: &mut Stream) -> Result<StepOutcome> {
        let mv = Move::from_action(action)?;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::usage("step before reset"))?;
        if !state.stage.p1_to_act() {
            return Err(Error::usage("stepping a finished episode"));
        }
        state.apply(mv)?;
        if !state.is_terminal() && !state.stage.p1_to_act() {
            let reply = p2_action(&self.peer, state.p2_card, &state.history, rng)?;
            state.apply(reply)?;
        }
        let done = state.is_terminal();
        let task_reward = if done { terminal_payoff(state)? } else { 0.0 };
        Ok(StepOutcome {
            next_observation: encode_obs(state),
            task_reward,
            episode_done: done,
        })
    }

    fn is_done(&self) -> bool {
        self.state.as_ref().is_none_or(KuhnState::is_terminal)
    }
}
