//! Elements of the free product: alternating words of non-root factor states.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One block of a word: a non-root state of a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub factor: u16,
    pub state: u32,
}

impl Letter {
    pub fn new(factor: usize, state: usize) -> Self {
        Self {
            factor: factor as u16,
            state: state as u32,
        }
    }

    #[inline]
    pub fn factor(self) -> usize {
        self.factor as usize
    }

    #[inline]
    pub fn state(self) -> usize {
        self.state as usize
    }
}

/// A word `x₁…x_n`, stored as a stack with the last letter on top. The empty
/// word is the root `o`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    /// Block length `‖x‖`.
    pub fn block_length(&self) -> usize {
        self.0.len()
    }

    /// Type `τ(x)`: factor of the last letter, `None` for the root.
    pub fn kind(&self) -> Option<usize> {
        self.0.last().map(|l| l.factor())
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    /// Checks alternation and that no letter is a factor root.
    pub fn is_well_formed(&self) -> bool {
        self.0.iter().all(|l| l.state != 0) && self.0.windows(2).all(|w| w[0].factor != w[1].factor)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "o");
        }
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "·")?;
            }
            write!(f, "{}:{}", l.factor, l.state)?;
        }
        Ok(())
    }
}
