//! Boolean transmitter-pulse / receiver selections and their budgets.
//!
//! The ground set used by the set-function code numbers transmit pulses first
//! (`i * P + p`) and receivers after them (`I * P + r`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RadarConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// Number of transmit pulses `K_P`.
    pub pulses: usize,
    /// Number of receivers `K_R`.
    pub receivers: usize,
}

impl Budgets {
    pub fn new(pulses: usize, receivers: usize) -> Self {
        Self { pulses, receivers }
    }

    pub fn check(&self, num_pulses: usize, num_receivers: usize) -> Result<()> {
        if self.pulses > num_pulses {
            return Err(Error::InfeasibleBudget(format!(
                "K_P = {} exceeds the {} candidate transmit pulses",
                self.pulses, num_pulses
            )));
        }
        if self.receivers > num_receivers {
            return Err(Error::InfeasibleBudget(format!(
                "K_R = {} exceeds the {} candidate receivers",
                self.receivers, num_receivers
            )));
        }
        Ok(())
    }
}

/// Serialized form: `A` as nested 0/1 rows and `b` as a 0/1 vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SelectionRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<u8>>,
    b: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SelectionRepr", into = "SelectionRepr")]
pub struct Selection {
    transmitters: usize,
    pulses: usize,
    /// Row-major `I x P` transmit-pulse mask.
    tx_pulses: Vec<bool>,
    rx: Vec<bool>,
}

impl Selection {
    pub fn empty(transmitters: usize, pulses: usize, receivers: usize) -> Self {
        Self {
            transmitters,
            pulses,
            tx_pulses: vec![false; transmitters * pulses],
            rx: vec![false; receivers],
        }
    }

    pub fn full_dims(transmitters: usize, pulses: usize, receivers: usize) -> Self {
        Self {
            transmitters,
            pulses,
            tx_pulses: vec![true; transmitters * pulses],
            rx: vec![true; receivers],
        }
    }

    pub fn full(cfg: &RadarConfig) -> Self {
        Self::full_dims(cfg.transmitters, cfg.pulses, cfg.receivers)
    }

    pub fn from_masks(
        transmitters: usize,
        pulses: usize,
        tx_pulses: Vec<bool>,
        rx: Vec<bool>,
    ) -> Result<Self> {
        if tx_pulses.len() != transmitters * pulses {
            return Err(Error::DimensionMismatch(format!(
                "pulse mask has {} entries, expected {}",
                tx_pulses.len(),
                transmitters * pulses
            )));
        }
        Ok(Self {
            transmitters,
            pulses,
            tx_pulses,
            rx,
        })
    }

    /// Builds a selection from ground-set element indices.
    pub fn from_elements(
        transmitters: usize,
        pulses: usize,
        receivers: usize,
        elements: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mut sel = Self::empty(transmitters, pulses, receivers);
        for e in elements {
            sel.set_element(e, true)?;
        }
        Ok(sel)
    }

    pub fn num_transmitters(&self) -> usize {
        self.transmitters
    }

    pub fn pulses_per_transmitter(&self) -> usize {
        self.pulses
    }

    pub fn num_candidate_pulses(&self) -> usize {
        self.tx_pulses.len()
    }

    pub fn num_candidate_receivers(&self) -> usize {
        self.rx.len()
    }

    pub fn ground_size(&self) -> usize {
        self.tx_pulses.len() + self.rx.len()
    }

    pub fn pulse(&self, i: usize, p: usize) -> bool {
        self.tx_pulses[i * self.pulses + p]
    }

    pub fn set_pulse(&mut self, i: usize, p: usize, on: bool) {
        self.tx_pulses[i * self.pulses + p] = on;
    }

    pub fn receiver(&self, r: usize) -> bool {
        self.rx[r]
    }

    pub fn set_receiver(&mut self, r: usize, on: bool) {
        self.rx[r] = on;
    }

    pub fn pulse_mask(&self) -> &[bool] {
        &self.tx_pulses
    }

    pub fn receiver_mask(&self) -> &[bool] {
        &self.rx
    }

    pub fn contains_element(&self, e: usize) -> bool {
        if e < self.tx_pulses.len() {
            self.tx_pulses[e]
        } else {
            self.rx.get(e - self.tx_pulses.len()).copied().unwrap_or(false)
        }
    }

    pub fn set_element(&mut self, e: usize, on: bool) -> Result<()> {
        let np = self.tx_pulses.len();
        if e < np {
            self.tx_pulses[e] = on;
        } else if e < np + self.rx.len() {
            self.rx[e - np] = on;
        } else {
            return Err(Error::OutsideGroundSet(e));
        }
        Ok(())
    }

    /// Selected ground-set elements in increasing order.
    pub fn elements(&self) -> Vec<usize> {
        (0..self.ground_size())
            .filter(|&e| self.contains_element(e))
            .collect()
    }

    pub fn count_pulses(&self) -> usize {
        self.tx_pulses.iter().filter(|&&b| b).count()
    }

    pub fn count_receivers(&self) -> usize {
        self.rx.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count_pulses() == 0 || self.count_receivers() == 0
    }

    pub fn selected_pulses(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let pulses = self.pulses;
        self.tx_pulses
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(move |(k, _)| (k / pulses, k % pulses))
    }

    pub fn selected_receivers(&self) -> impl Iterator<Item = usize> + '_ {
        self.rx.iter().enumerate().filter(|(_, &on)| on).map(|(r, _)| r)
    }

    /// A transmitter is active iff it sends at least one pulse.
    pub fn active_transmitters(&self) -> Vec<usize> {
        (0..self.transmitters)
            .filter(|&i| (0..self.pulses).any(|p| self.pulse(i, p)))
            .collect()
    }

    pub fn satisfies(&self, budgets: &Budgets) -> bool {
        self.count_pulses() <= budgets.pulses && self.count_receivers() <= budgets.receivers
    }

    pub fn check_dims(&self, cfg: &RadarConfig) -> Result<()> {
        if self.transmitters != cfg.transmitters
            || self.pulses != cfg.pulses
            || self.rx.len() != cfg.receivers
        {
            return Err(Error::DimensionMismatch(format!(
                "selection is {}x{} with {} receivers, configuration is {}x{} with {}",
                self.transmitters,
                self.pulses,
                self.rx.len(),
                cfg.transmitters,
                cfg.pulses,
                cfg.receivers
            )));
        }
        Ok(())
    }

    /// `A` as nested 0/1 rows.
    pub fn pulse_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.transmitters)
            .map(|i| (0..self.pulses).map(|p| self.pulse(i, p) as u8).collect())
            .collect()
    }

    pub fn receiver_vector(&self) -> Vec<u8> {
        self.rx.iter().map(|&b| b as u8).collect()
    }

    pub fn from_matrix(a: &[Vec<u8>], b: &[u8]) -> Result<Self> {
        let transmitters = a.len();
        let pulses = a.first().map_or(0, Vec::len);
        if a.iter().any(|row| row.len() != pulses) {
            return Err(Error::DimensionMismatch("ragged pulse matrix".into()));
        }
        let bit = |x: u8| match x {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::DimensionMismatch(format!(
                "selection entries must be 0 or 1, found {other}"
            ))),
        };
        let tx_pulses = a
            .iter()
            .flatten()
            .map(|&x| bit(x))
            .collect::<Result<Vec<_>>>()?;
        let rx = b.iter().map(|&x| bit(x)).collect::<Result<Vec<_>>>()?;
        Self::from_masks(transmitters, pulses, tx_pulses, rx)
    }
}

impl From<Selection> for SelectionRepr {
    fn from(s: Selection) -> Self {
        Self {
            a: s.pulse_matrix(),
            b: s.receiver_vector(),
        }
    }
}

impl TryFrom<SelectionRepr> for Selection {
    type Error = Error;

    fn try_from(r: SelectionRepr) -> Result<Self> {
        Selection::from_matrix(&r.a, &r.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_indices_round_trip() {
        let sel = Selection::from_elements(2, 3, 2, [0, 4, 7]).unwrap();
        assert!(sel.pulse(0, 0));
        assert!(sel.pulse(1, 1));
        assert!(sel.receiver(1));
        assert_eq!(sel.elements(), vec![0, 4, 7]);
        assert_eq!(sel.active_transmitters(), vec![0, 1]);
        assert!(matches!(
            Selection::from_elements(2, 3, 2, [8]),
            Err(Error::OutsideGroundSet(8))
        ));
    }

    #[test]
    fn matrix_form_round_trips() {
        let sel = Selection::from_elements(2, 2, 3, [1, 2, 5]).unwrap();
        let back = Selection::from_matrix(&sel.pulse_matrix(), &sel.receiver_vector()).unwrap();
        assert_eq!(sel, back);
        assert!(Selection::from_matrix(&[vec![0, 2]], &[1]).is_err());
    }
}
