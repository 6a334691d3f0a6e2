use crate::scalar::Scalar;

/// A model component whose trainable values can be walked in a fixed order.
///
/// Gradients are represented by a value of the same type, so the flattened
/// parameter and gradient vectors line up index for index.
pub trait Parameters<T: Scalar>: Clone {
    fn visit(&self, f: &mut dyn FnMut(&[T]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn load_flat(&mut self, flat: &[T]) {
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |s| s.fill(T::zero()));
        z
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }
}
