//! Reverse-mode autodiff on a small graph, checked against central
//! differences.
//!
//! ```text
//! cargo run --release --example autodiff_gradcheck
//! ```

use dfkd_beam::autodiff::gradcheck::{max_relative_error, numeric_gradient};
use dfkd_beam::autodiff::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `mean(log_softmax(tanh(x W) / T) * y)` for fixed `x` and `y`.
fn loss(g: &mut Graph, w: Tensor, x: &Tensor, y: &Tensor) -> dfkd_beam::Result<(f64, Vec<f64>)> {
    let w = g.leaf(w);
    let x = g.constant(x.clone());
    let y = g.constant(y.clone());
    let h = g.matmul(x, w)?;
    let h = g.tanh(h);
    let lp = g.log_softmax(h, 2.0)?;
    let prod = g.mul(lp, y)?;
    let l = g.mean(prod);
    g.backward(l)?;
    Ok((g.item(l)?, g.grad(w).map(<[f64]>::to_vec).unwrap_or_default()))
}

fn main() -> dfkd_beam::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rand = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let (x, w, y) = (rand(&[5, 4]), rand(&[4, 3]), rand(&[5, 3]));

    let (value, analytic) = loss(&mut Graph::new(), w.clone().with_grad(), &x, &y)?;
    let numeric = numeric_gradient(
        |p| loss(&mut Graph::new(), Tensor::new(&[4, 3], p.to_vec()).unwrap(), &x, &y).unwrap().0,
        w.data(),
        1e-5,
    );
    println!("loss {value:.6}");
    println!("analytic {:.5?}", &analytic[..4]);
    println!("numeric  {:.5?}", &numeric[..4]);
    println!("max relative error {:.2e}", max_relative_error(&analytic, &numeric, 1e-6));
    Ok(())
}
