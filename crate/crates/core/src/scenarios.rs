//! Ready-made configurations: a 77 GHz, 100 MHz automotive radar in the
//! array sizes used by the examples and tests.

use num_complex::Complex64;

use crate::error::Result;
use crate::fim::{build_grid, DeltaGrid};
use crate::model::{ArrayOrigin, RadarConfig, TimeOrigin};

/// Base radar with the given array sizes. Times and pair offsets are measured
/// from the middle of the candidate pulse train and virtual array, and the
/// CRLB is expressed in resolution cells.
pub fn radar(transmitters: usize, pulses: usize, receivers: usize) -> RadarConfig {
    let mut cfg = RadarConfig {
        fc: 77e9,
        bandwidth: 100e6,
        pulse_duration: 20e-6,
        pri: 50e-6,
        tx_shift: 1e-6,
        sample_period: 2.5e-6,
        samples: 8,
        transmitters,
        receivers,
        pulses,
        spacing: None,
        noise_std: 1.0,
        alpha: vec![Complex64::new(1.0, 0.0); 2],
        gamma: [1.0; 4],
        time_origin: TimeOrigin::Center,
        array_origin: ArrayOrigin::Center,
    };
    cfg.gamma = cfg.resolution_weights();
    cfg
}

/// A configuration together with its difference grid.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub config: RadarConfig,
    pub grid: DeltaGrid,
}

/// One transmitter, one receiver and twelve pulses. Velocity differences run
/// from half a resolution cell to three cells.
pub fn pulse_train() -> Result<Scenario> {
    let config = radar(1, 12, 1);
    let rv = config.velocity_resolution();
    let grid = build_grid((0.0, 0.0), (0.5 * rv, 3.0 * rv), 1, 20, 0.0)?;
    Ok(Scenario {
        name: "pulse_train",
        config,
        grid,
    })
}

/// Eight transmitters, four receivers and a single pulse. Angle differences
/// run from one resolution cell to 0.5 in sine space.
pub fn angle_array() -> Result<Scenario> {
    let config = radar(8, 1, 4);
    let ru = config.angle_resolution();
    let grid = build_grid((ru, 0.5), (0.0, 0.0), 20, 1, 0.0)?;
    Ok(Scenario {
        name: "angle_array",
        config,
        grid,
    })
}

fn joint_grid(cfg: &RadarConfig) -> Result<DeltaGrid> {
    DeltaGrid::resolution_cells(cfg, 3.0, 9, 1.0)
}

/// Three fixed receivers, four transmitters with four pulses each.
pub fn desk_fixed_rx() -> Result<Scenario> {
    let config = radar(4, 4, 3);
    let grid = joint_grid(&config)?;
    Ok(Scenario {
        name: "desk_fixed_rx",
        config,
        grid,
    })
}

/// Four receivers, four transmitters and four pulses, all selectable.
pub fn desk_joint() -> Result<Scenario> {
    let config = radar(4, 4, 4);
    let grid = joint_grid(&config)?;
    Ok(Scenario {
        name: "desk_joint",
        config,
        grid,
    })
}

/// Twenty transmitters with ten pulses each and twenty receivers.
pub fn large() -> Result<Scenario> {
    let config = radar(20, 10, 20);
    let grid = DeltaGrid::resolution_cells(&config, 3.0, 7, 1.0)?;
    Ok(Scenario {
        name: "large",
        config,
        grid,
    })
}

/// Two transmitters, two pulses, two receivers.
pub fn toy() -> Result<Scenario> {
    let config = radar(2, 2, 2);
    let grid = joint_grid(&config)?;
    Ok(Scenario {
        name: "toy",
        config,
        grid,
    })
}

pub fn by_name(name: &str) -> Option<Result<Scenario>> {
    Some(match name {
        "pulse_train" => pulse_train(),
        "angle_array" => angle_array(),
        "desk_fixed_rx" => desk_fixed_rx(),
        "desk_joint" => desk_joint(),
        "large" => large(),
        "toy" => toy(),
        _ => return None,
    })
}

pub const NAMES: [&str; 6] = [
    "pulse_train",
    "angle_array",
    "desk_fixed_rx",
    "desk_joint",
    "large",
    "toy",
];
