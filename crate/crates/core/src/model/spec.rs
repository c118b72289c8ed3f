use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::Activation;

pub const STAGES: usize = 3;
pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_INPUT_SHAPE: [usize; 3] = [3, 32, 32];
/// Canonical CIFAR ResNet stage widths.
pub const DEFAULT_CHANNELS: [usize; 3] = [16, 32, 64];

/// Address of a residual unit: `stage` is 1-based, `unit` 0-based, matching
/// the canonical weight names `stage{s}.unit{u}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitId {
    pub stage: usize,
    pub unit: usize,
}

impl UnitId {
    pub fn new(stage: usize, unit: usize) -> Self {
        Self { stage, unit }
    }

    pub fn prefix(&self) -> String {
        format!("stage{}.unit{}", self.stage, self.unit)
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.prefix())
    }
}

/// CIFAR-style BasicBlock ResNet architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub units_per_stage: usize,
    pub stage_channels: [usize; 3],
    pub input_shape: [usize; 3],
    pub n_classes: usize,
    pub activation: Activation,
}

/// Shape and wiring of one residual unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitLayout {
    pub id: UnitId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub in_shape: [usize; 3],
    pub out_shape: [usize; 3],
}

impl UnitLayout {
    /// Stride-2 unit with a 1x1 projection shortcut.
    pub fn is_downsampling(&self) -> bool {
        self.stride == 2
    }

    pub fn in_dim(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_dim(&self) -> usize {
        self.out_shape.iter().product()
    }
}

pub fn build_spec(units_per_stage: usize, stage_channels: [usize; 3], activation: Activation) -> Result<NetworkSpec> {
    if units_per_stage == 0 {
        return Err(Error::InvalidArgument("units_per_stage must be >= 1".into()));
    }
    if stage_channels.contains(&0) {
        return Err(Error::InvalidArgument("stage channels must be >= 1".into()));
    }
    Ok(NetworkSpec {
        units_per_stage,
        stage_channels,
        input_shape: CIFAR_INPUT_SHAPE,
        n_classes: CIFAR_CLASSES,
        activation,
    })
}

impl NetworkSpec {
    pub fn resnet56(activation: Activation) -> Self {
        build_spec(9, DEFAULT_CHANNELS, activation).expect("valid")
    }

    pub fn resnet110(activation: Activation) -> Self {
        build_spec(18, DEFAULT_CHANNELS, activation).expect("valid")
    }

    /// `6n + 2`
    pub fn depth(&self) -> usize {
        6 * self.units_per_stage + 2
    }

    /// Weighted layers on the main path: stem conv, two convs per unit, fc.
    /// Projection shortcuts are not counted, following the usual convention.
    pub fn weighted_layer_count(&self) -> usize {
        1 + self.units().count() * 2 + 1
    }

    pub fn total_units(&self) -> usize {
        STAGES * self.units_per_stage
    }

    pub fn stem_shape(&self) -> [usize; 3] {
        let [_, h, w] = self.input_shape;
        [self.stage_channels[0], h, w]
    }

    /// Units in forward order.
    pub fn units(&self) -> impl Iterator<Item = UnitId> + '_ {
        (1..=STAGES).flat_map(move |s| (0..self.units_per_stage).map(move |u| UnitId::new(s, u)))
    }

    pub fn unit_index(&self, id: UnitId) -> Result<usize> {
        if id.stage == 0 || id.stage > STAGES || id.unit >= self.units_per_stage {
            return Err(Error::UnitOutOfRange {
                stage: id.stage,
                unit: id.unit,
            });
        }
        Ok((id.stage - 1) * self.units_per_stage + id.unit)
    }

    pub fn unit_at(&self, index: usize) -> UnitId {
        UnitId::new(index / self.units_per_stage + 1, index % self.units_per_stage)
    }

    pub fn stage_map_shape(&self, stage: usize) -> [usize; 3] {
        let [_, h, w] = self.input_shape;
        let f = 1 << (stage - 1);
        [self.stage_channels[stage - 1], h / f, w / f]
    }

    pub fn layout(&self, id: UnitId) -> Result<UnitLayout> {
        self.unit_index(id)?;
        let out_shape = self.stage_map_shape(id.stage);
        let (in_shape, stride) = if id.unit == 0 && id.stage > 1 {
            (self.stage_map_shape(id.stage - 1), 2)
        } else {
            (out_shape, 1)
        };
        Ok(UnitLayout {
            id,
            in_channels: in_shape[0],
            out_channels: out_shape[0],
            stride,
            in_shape,
            out_shape,
        })
    }

    /// Every tensor name this architecture needs, with its shape.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let bn = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c: usize| {
            for field in ["gamma", "beta", "mean", "var"] {
                out.push((format!("{prefix}.{field}"), vec![c]));
            }
        };
        let c0 = self.stage_channels[0];
        out.push(("stem.conv.weight".into(), vec![c0, self.input_shape[0], 3, 3]));
        bn(&mut out, "stem.bn", c0);
        for id in self.units() {
            let l = self.layout(id).expect("unit in range");
            let p = id.prefix();
            out.push((format!("{p}.conv1.weight"), vec![l.out_channels, l.in_channels, 3, 3]));
            bn(&mut out, &format!("{p}.bn1"), l.out_channels);
            out.push((format!("{p}.conv2.weight"), vec![l.out_channels, l.out_channels, 3, 3]));
            bn(&mut out, &format!("{p}.bn2"), l.out_channels);
            if l.is_downsampling() {
                out.push((
                    format!("{p}.down.conv.weight"),
                    vec![l.out_channels, l.in_channels, 1, 1],
                ));
                bn(&mut out, &format!("{p}.down.bn"), l.out_channels);
            }
        }
        let c3 = self.stage_channels[2];
        out.push(("head.fc.weight".into(), vec![self.n_classes, c3]));
        out.push(("head.fc.bias".into(), vec![self.n_classes]));
        out
    }
}
