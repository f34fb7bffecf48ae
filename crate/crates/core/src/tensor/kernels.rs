use rayon::prelude::*;

use super::Real;

const PAR_THRESHOLD: usize = 1 << 15;

/// Numpy-style broadcast of two shapes, right-aligned.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every linear index of `out`, the linear index of the broadcast source.
pub(crate) fn broadcast_map(out: &[usize], src: &[usize]) -> Vec<usize> {
    let total: usize = out.iter().product();
    let src_total: usize = src.iter().product();
    if out == src {
        return (0..total).collect();
    }
    if src_total == 1 {
        return vec![0; total];
    }
    // trailing-suffix fast path
    if src.len() <= out.len() && out[out.len() - src.len()..] == *src {
        return (0..total).map(|i| i % src_total).collect();
    }
    let rank = out.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + offset] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let mut idx = vec![0usize; rank];
    let mut map = Vec::with_capacity(total);
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

/// For every linear index of the permuted output, the source linear index.
pub(crate) fn permute_map(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let mut src_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        src_strides[i] = src_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    let mut map = Vec::with_capacity(total);
    for _ in 0..total {
        map.push(cur);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            cur -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

/// `out[m,n] = a[m,k] · b[k,n]`
pub(crate) fn mm_nn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    let row = |(i, o): (usize, &mut [T])| {
        let mut acc = vec![0.0f64; n];
        let ar = &a[i * k..(i + 1) * k];
        for (kk, &av) in ar.iter().enumerate() {
            let av = av.f64();
            if av == 0.0 {
                continue;
            }
            for (s, &bv) in acc.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
                *s += av * bv.f64();
            }
        }
        for (dst, s) in o.iter_mut().zip(acc) {
            *dst = T::of(s);
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `out[m,k] += g[m,n] · b[k,n]ᵀ`
pub(crate) fn mm_nt_acc<T: Real>(g: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [f64]) {
    let row = |(i, o): (usize, &mut [f64])| {
        let gr = &g[i * n..(i + 1) * n];
        for (kk, dst) in o.iter_mut().enumerate() {
            let br = &b[kk * n..(kk + 1) * n];
            *dst += gr
                .iter()
                .zip(br)
                .map(|(x, y)| x.f64() * y.f64())
                .sum::<f64>();
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(k).enumerate().for_each(row);
    } else {
        out.chunks_mut(k).enumerate().for_each(row);
    }
}

/// `out[k,n] += a[m,k]ᵀ · g[m,n]`
pub(crate) fn mm_tn_acc<T: Real>(a: &[T], g: &[T], m: usize, k: usize, n: usize, out: &mut [f64]) {
    let row = |(kk, o): (usize, &mut [f64])| {
        for i in 0..m {
            let av = a[i * k + kk].f64();
            if av == 0.0 {
                continue;
            }
            for (dst, &gv) in o.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                *dst += av * gv.f64();
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[4]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[4]), None);
    }

    #[test]
    fn general_broadcast_map() {
        // out [2,3], src [2,1]
        assert_eq!(broadcast_map(&[2, 3], &[2, 1]), vec![0, 0, 0, 1, 1, 1]);
        // out [2,2,2], src [2,1,2]
        assert_eq!(broadcast_map(&[2, 2, 2], &[2, 1, 2]), vec![0, 1, 0, 1, 2, 3, 2, 3]);
    }

    #[test]
    fn transpose_map() {
        // [2,3] -> [3,2]
        assert_eq!(permute_map(&[2, 3], &[1, 0]), vec![0, 3, 1, 4, 2, 5]);
    }
}
