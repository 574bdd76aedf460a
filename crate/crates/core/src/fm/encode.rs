//! Rating events to sparse FM inputs.
//!
//! A `None` user or item is cold-start: it is unknown to training, so its
//! one-hot entry and its latent block are left out and the prediction falls
//! back on the remaining features. Latent components that are exactly zero
//! are omitted since they contribute nothing.

use alloc::vec::Vec;

use super::{FeatureLayout, FmError, SparseFeatureVector, Variant};

fn one_hots(user: Option<usize>, item: Option<usize>, layout: &FeatureLayout) -> Result<Vec<(usize, f64)>, FmError> {
    let mut entries = Vec::with_capacity(2 + layout.k_user_topics() + layout.k_item_latents());
    if let Some(u) = user {
        if u >= layout.n_users() {
            return Err(FmError::IndexOutOfRange { index: u, dim: layout.n_users() });
        }
        entries.push((layout.user_index(u), 1.0));
    }
    if let Some(i) = item {
        if i >= layout.n_items() {
            return Err(FmError::IndexOutOfRange { index: i, dim: layout.n_items() });
        }
        entries.push((layout.item_index(i), 1.0));
    }
    Ok(entries)
}

fn push_latent(
    entries: &mut Vec<(usize, f64)>,
    values: Option<&[f64]>,
    expected: usize,
    owner: &'static str,
    index: impl Fn(usize) -> usize,
) -> Result<(), FmError> {
    let values = values.ok_or(FmError::MissingLatent(owner))?;
    if values.len() != expected {
        return Err(FmError::DimensionMismatch { expected, got: values.len() });
    }
    for (k, &value) in values.iter().enumerate() {
        if value != 0.0 {
            entries.push((index(k), value));
        }
    }
    Ok(())
}

fn require(layout: &FeatureLayout, variant: Variant) -> Result<(), FmError> {
    if layout.variant() != variant {
        return Err(FmError::VariantMismatch(layout.variant()));
    }
    Ok(())
}

/// User and item one-hots only.
pub fn encode_baseline(
    user: Option<usize>,
    item: Option<usize>,
    layout: &FeatureLayout,
) -> Result<SparseFeatureVector, FmError> {
    require(layout, Variant::Baseline)?;
    SparseFeatureVector::new(one_hots(user, item, layout)?, layout.dim())
}

/// One-hots followed by the user's and the item's topic proportions. A side
/// whose topic block has width zero takes no topic vector.
pub fn encode_topic(
    user: Option<usize>,
    item: Option<usize>,
    theta_user: Option<&[f64]>,
    theta_item: Option<&[f64]>,
    layout: &FeatureLayout,
) -> Result<SparseFeatureVector, FmError> {
    require(layout, Variant::Topic)?;
    let mut entries = one_hots(user, item, layout)?;
    if user.is_some() && layout.k_user_topics() > 0 {
        push_latent(&mut entries, theta_user, layout.k_user_topics(), "user", |k| layout.user_topic_index(k))?;
    }
    if item.is_some() && layout.k_item_latents() > 0 {
        push_latent(&mut entries, theta_item, layout.k_item_latents(), "item", |l| layout.item_latent_index(l))?;
    }
    SparseFeatureVector::new(entries, layout.dim())
}

/// One-hots followed by the item's latent vector.
pub fn encode_vector(
    user: Option<usize>,
    item: Option<usize>,
    item_vector: Option<&[f64]>,
    layout: &FeatureLayout,
) -> Result<SparseFeatureVector, FmError> {
    require(layout, Variant::Vector)?;
    let mut entries = one_hots(user, item, layout)?;
    if item.is_some() && layout.k_item_latents() > 0 {
        push_latent(&mut entries, item_vector, layout.k_item_latents(), "item", |l| layout.item_latent_index(l))?;
    }
    SparseFeatureVector::new(entries, layout.dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_entries() {
        let layout = FeatureLayout::baseline(3, 2);
        assert_eq!(encode_baseline(Some(2), Some(0), &layout).unwrap().entries(), &[(2, 1.0), (3, 1.0)]);
        assert_eq!(encode_baseline(Some(0), Some(0), &layout).unwrap().entries(), &[(0, 1.0), (3, 1.0)]);
        assert_eq!(encode_baseline(None, Some(1), &layout).unwrap().entries(), &[(4, 1.0)]);
        assert!(encode_baseline(None, None, &layout).unwrap().entries().is_empty());
    }

    #[test]
    fn baseline_out_of_range() {
        let layout = FeatureLayout::baseline(3, 2);
        assert_eq!(encode_baseline(Some(3), Some(0), &layout), Err(FmError::IndexOutOfRange { index: 3, dim: 3 }));
        assert_eq!(encode_baseline(Some(0), Some(2), &layout), Err(FmError::IndexOutOfRange { index: 2, dim: 2 }));
    }

    #[test]
    fn topic_entries() {
        let layout = FeatureLayout::topic(2, 2, 2, 2);
        let x = encode_topic(Some(1), Some(0), Some(&[0.3, 0.7]), Some(&[1.0, 0.0]), &layout).unwrap();
        assert_eq!(x.entries(), &[(1, 1.0), (2, 1.0), (4, 0.3), (5, 0.7), (6, 1.0)]);

        let x = encode_topic(Some(1), Some(0), Some(&[0.5, 0.5]), Some(&[0.0, 1.0]), &layout).unwrap();
        assert_eq!(x.entries(), &[(1, 1.0), (2, 1.0), (4, 0.5), (5, 0.5), (7, 1.0)]);
        assert!(x.entries().iter().all(|&(j, _)| j != 6));
    }

    #[test]
    fn topic_item_side_only() {
        let layout = FeatureLayout::topic(2, 2, 0, 2);
        let x = encode_topic(Some(0), Some(1), None, Some(&[0.25, 0.75]), &layout).unwrap();
        assert_eq!(x.entries(), &[(0, 1.0), (3, 1.0), (4, 0.25), (5, 0.75)]);
    }

    #[test]
    fn topic_cold_user_drops_user_block() {
        let layout = FeatureLayout::topic(2, 2, 2, 2);
        let x = encode_topic(None, Some(1), None, Some(&[0.25, 0.75]), &layout).unwrap();
        assert_eq!(x.entries(), &[(3, 1.0), (6, 0.25), (7, 0.75)]);
    }

    #[test]
    fn topic_errors() {
        let layout = FeatureLayout::topic(2, 2, 2, 2);
        assert_eq!(
            encode_topic(Some(0), Some(0), Some(&[1.0]), Some(&[0.5, 0.5]), &layout),
            Err(FmError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(
            encode_topic(Some(0), Some(0), None, Some(&[0.5, 0.5]), &layout),
            Err(FmError::MissingLatent("user"))
        );
        assert_eq!(
            encode_topic(Some(0), Some(0), None, None, &FeatureLayout::baseline(2, 2)),
            Err(FmError::VariantMismatch(Variant::Baseline))
        );
    }

    #[test]
    fn vector_entries() {
        let layout = FeatureLayout::vector(1, 1, 2);
        let x = encode_vector(Some(0), Some(0), Some(&[0.2, -0.4]), &layout).unwrap();
        assert_eq!(x.entries(), &[(0, 1.0), (1, 1.0), (2, 0.2), (3, -0.4)]);

        let zeros = encode_vector(Some(0), Some(0), Some(&[0.0, 0.0]), &layout).unwrap();
        let base = encode_baseline(Some(0), Some(0), &FeatureLayout::baseline(1, 1)).unwrap();
        assert_eq!(zeros.entries(), base.entries());

        assert_eq!(
            encode_vector(Some(0), Some(0), Some(&[0.1; 3]), &layout),
            Err(FmError::DimensionMismatch { expected: 2, got: 3 })
        );
    }
}
