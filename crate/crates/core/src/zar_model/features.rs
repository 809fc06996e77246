use crate::error::{Error, Result};
use crate::lm_backend::EncoderOutput;
use crate::scalar::Scalar;

/// Encoder rows extended with the target-predicate and any-predicate bits.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<F> {
    rows: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> FeatureSequence<F> {
    pub fn from_rows(rows: usize, width: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * width {
            return Err(Error::Shape(format!(
                "{} values for {rows}x{width} features",
                data.len()
            )));
        }
        Ok(FeatureSequence { rows, width, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Encoder width plus two.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }
}

/// Features of target predicate `j`; `predicates` holds the 1-based positions
/// of all predicates of the sentence.
pub fn build_features<F: Scalar>(
    enc: &EncoderOutput,
    predicates: &[usize],
    j: usize,
) -> Result<FeatureSequence<F>> {
    let target = *predicates.get(j).ok_or(Error::OutOfRange {
        index: j + 1,
        len: predicates.len(),
    })?;
    let rows = enc.rows();
    if let Some(&p) = predicates.iter().find(|&&p| p == 0 || p > rows) {
        return Err(Error::OutOfRange {
            index: p,
            len: rows,
        });
    }
    let width = enc.dim() + 2;
    let mut data = Vec::with_capacity(rows * width);
    for i in 0..rows {
        data.extend(enc.row(i).iter().map(|&v| F::of(v)));
        let position = i + 1;
        data.push(if position == target {
            F::one()
        } else {
            F::zero()
        });
        data.push(if predicates.contains(&position) {
            F::one()
        } else {
            F::zero()
        });
    }
    FeatureSequence::from_rows(rows, width, data)
}
