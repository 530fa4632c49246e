//! Seeded stratified train/validation split.

use crate::rng::SplitMix64;
use crate::url_features::Label;

/// Splits sample indices so that each class contributes
/// `round(train_fraction * class_size)` samples to the training side.
/// Class 0 is shuffled first, then class 1, from one stream seeded with
/// `seed`. Both returned lists are in ascending index order.
pub fn stratified_split(
    labels: &[Label],
    train_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Label::Legitimate, Label::Phishing] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_class_ratio_and_partitions() {
        let labels: Vec<Label> = (0..100).map(|i| Label::from_bool(i % 4 == 0)).collect();
        let (train, test) = stratified_split(&labels, 0.8, 3);
        assert_eq!(train.len() + test.len(), 100);
        let phish_train = train.iter().filter(|&&i| labels[i].is_phishing()).count();
        assert_eq!(phish_train, 20);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(stratified_split(&labels, 0.8, 3), (train, test));
    }
}
