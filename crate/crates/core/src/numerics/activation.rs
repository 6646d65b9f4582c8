//! Elementwise nonlinearities. Backward passes take the forward *output*
//! (or input for ReLU) and scale the incoming gradient in place.

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// `grad *= 1[out > 0]`.
pub fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= LEAKY_SLOPE
        }
    });
}

pub fn leaky_relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o < 0.0 {
            *g *= LEAKY_SLOPE;
        }
    }
}

pub fn tanh_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        *g *= 1.0 - o * o;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
