//! Projected gradient ascent over blocks of coordinates, each block
//! renormalised after every step.

pub(crate) struct Ascent<'a> {
    /// Objective (a log-ratio); `-inf` marks invalid points.
    pub value: &'a (dyn Fn(&[Vec<f64>]) -> f64 + Sync),
    pub gradient: &'a (dyn Fn(&[Vec<f64>]) -> Vec<Vec<f64>> + Sync),
    pub normalise: &'a (dyn Fn(&mut [Vec<f64>]) + Sync),
    /// Blocks constrained to the nonnegative orthant.
    pub nonnegative: &'a [bool],
}

impl Ascent<'_> {
    /// Runs from `start` for at most `budget` objective evaluations. Each step
    /// backtracks by halving from 0.5; the run stops once an accepted step
    /// gains less than 1e-12.
    pub fn run(&self, mut x: Vec<Vec<f64>>, budget: u64) -> (Vec<Vec<f64>>, f64, u64) {
        for (b, nn) in x.iter_mut().zip(self.nonnegative) {
            if *nn {
                b.iter_mut().for_each(|v| *v = v.abs());
            }
        }
        (self.normalise)(&mut x);
        let mut value = (self.value)(&x);
        let mut used = 1;
        while used < budget {
            let grad = (self.gradient)(&x);
            let mut step = 0.5;
            let mut improved = false;
            while used < budget && step > 1e-14 {
                let mut trial = x.clone();
                for ((b, g), nn) in trial.iter_mut().zip(&grad).zip(self.nonnegative) {
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if gn == 0.0 || !gn.is_finite() {
                        continue;
                    }
                    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    let scale = step * bn / gn;
                    for (v, gv) in b.iter_mut().zip(g) {
                        *v += scale * gv;
                        if *nn && *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                (self.normalise)(&mut trial);
                let tv = (self.value)(&trial);
                used += 1;
                if tv > value {
                    improved = tv - value > 1e-12;
                    x = trial;
                    value = tv;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (x, value, used)
    }
}
