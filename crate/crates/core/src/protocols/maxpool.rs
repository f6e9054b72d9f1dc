use crate::error::{Error, Result};
use crate::party::Party;
use crate::rss::Shares;

impl Party {
    /// Maximum and one-hot argmax of each of `windows` rows of length `n`
    /// (row-major). Ties go to the earliest index.
    pub fn maxpool_argmax(&mut self, a: &Shares, windows: usize, n: usize) -> Result<(Shares, Shares)> {
        if n == 0 || a.len() != windows * n {
            return Err(Error::Shape(format!("{} values for {windows} windows of {n}", a.len())));
        }
        self.scope("maxpool", |p| {
            let l = a.modulus;
            let col = |i: usize| -> Vec<usize> { (0..windows).map(|w| w * n + i).collect() };
            let unit = |i: usize| -> Vec<u64> {
                (0..windows * n).map(|k| (k % n == i) as u64).collect()
            };
            let mut max = a.gather(&col(0));
            let mut ind = p.public(l, &unit(0));
            for i in 1..n {
                let ai = a.gather(&col(i));
                let ei = p.public(l, &unit(i));
                let b = p.drelu(&max.sub(&ai)?)?;
                let d = p.scope("ss", |p| p.bit_to_ring(&b))?;
                let dm = max.sub(&ai)?;
                let di = ind.sub(&ei)?;
                let d_rep = d.repeat_each(n);
                let prods = p.scope("ss", |p| p.mult_batch(&[(&dm, &d), (&di, &d_rep)]))?;
                max = ai.add(&prods[0])?;
                ind = ei.add(&prods[1])?;
            }
            Ok((max, ind))
        })
    }
}
