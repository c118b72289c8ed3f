use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Element-wise nonlinearity.
///
/// ReLU uses the one-sided derivative `relu'(0) = 0`. Softplus exists so the
/// Taylor-remainder checks can run on a smooth network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        })
    }
}

impl Activation {
    #[inline]
    pub fn eval<T: Real>(self, x: T) -> (T, T) {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    (x, T::one())
                } else {
                    (T::zero(), T::zero())
                }
            }
            Activation::Softplus => {
                // max(x, 0) + ln(1 + e^{-|x|}); derivative is the logistic function.
                let e = (-x.abs()).exp();
                let y = x.max(T::zero()) + e.ln_1p();
                let s = if x >= T::zero() {
                    T::one() / (T::one() + e)
                } else {
                    e / (T::one() + e)
                };
                (y, s)
            }
            Activation::Identity => (x, T::one()),
        }
    }
}

/// Returns `(sigma(x), sigma'(x))` element-wise.
pub fn act_forward<T: Real>(x: &Tensor<T>, kind: Activation) -> (Tensor<T>, Tensor<T>) {
    let mut y = x.clone();
    let mut mask = x.clone();
    for ((yi, mi), &xi) in y.data_mut().iter_mut().zip(mask.data_mut()).zip(x.data()) {
        let (a, d) = kind.eval(xi);
        *yi = a;
        *mi = d;
    }
    (y, mask)
}
