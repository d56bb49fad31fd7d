use super::Matrix;

/// Elementwise `max(0, v)`.
pub fn relu(input: &Matrix) -> Matrix {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `grad` where the forward input was strictly positive; the
/// subgradient at 0 is 0.
pub fn relu_backward(input: &Matrix, grad: &Matrix) -> Matrix {
    debug_assert_eq!(input.data().len(), grad.data().len());
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(grad.rows(), grad.cols(), data).expect("shape preserved")
}
