//! Ensemble averaging, calibration, diversity and the Jensen gap on
//! hand-made predictions.

use sebays::metrics::{accuracy, check_jensen, ece, ensemble_average, ensemble_diversity, ensemble_size_sweep, nll};
use sebays::numeric::DenseMatrix;

fn main() {
    let labels = [0, 1, 2, 1];
    let a = DenseMatrix::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.3, 0.6, 0.1], vec![0.5, 0.1, 0.4], vec![0.2, 0.7, 0.1]]).unwrap();
    let b = DenseMatrix::from_rows(&[vec![0.6, 0.3, 0.1], vec![0.6, 0.3, 0.1], vec![0.2, 0.1, 0.7], vec![0.1, 0.8, 0.1]]).unwrap();
    let c = DenseMatrix::from_rows(&[vec![0.4, 0.4, 0.2], vec![0.2, 0.5, 0.3], vec![0.3, 0.2, 0.5], vec![0.3, 0.3, 0.4]]).unwrap();
    let preds = [&a, &b, &c];

    for (name, p) in [("a", &a), ("b", &b), ("c", &c)] {
        println!("{name}: acc {:.3} nll {:.4}", accuracy(p, &labels).unwrap(), nll(p, &labels).unwrap());
    }
    let ens = ensemble_average(&preds).unwrap();
    println!("ensemble: acc {:.3} nll {:.4} ece {:.4}", accuracy(&ens, &labels).unwrap(), nll(&ens, &labels).unwrap(), ece(&ens, &labels, 15).unwrap());

    let d = ensemble_diversity(&preds).unwrap();
    println!("d_dis {:.4} d_kl {:.4}", d.d_dis, d.d_kl);
    let j = check_jensen(&preds, &labels).unwrap();
    println!("jensen: ensemble nll {:.4} <= mean individual {:.4}", j.ensemble_nll, j.mean_individual_nll);
    for row in ensemble_size_sweep(&preds, &labels).unwrap() {
        println!("{row:?}");
    }
}
