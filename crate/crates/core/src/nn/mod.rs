//! Small f64 tensor toolkit for the refiner and loss networks.

pub mod conv;
pub mod tensor;

pub use conv::{ConvGrads, ConvLayer};
pub use tensor::FeatureMap;

pub const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Logistic function. Saturates to exactly 0 or 1 for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_saturates_exactly() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-2.0) + sigmoid(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(2.0), 2.0);
        assert_eq!(leaky_relu(-1.0), -0.2);
        assert_eq!(leaky_relu_grad(-1.0), 0.2);
    }
}
