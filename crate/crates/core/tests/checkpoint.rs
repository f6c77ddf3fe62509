use morphan::annc::AnncConfig;
use morphan::corpus::Quadruple;
use morphan::embedder::EmbedderConfig;
use morphan::trainer::{
    load_checkpoint, save_checkpoint, train_classifier, train_regressor, CheckpointError, ModelCheckpoint, Task,
    TrainConfig, MAGIC,
};

fn small(task: Task) -> TrainConfig {
    let mut c = match task {
        Task::Classification => TrainConfig::classification("toy", 9),
        Task::Regression => TrainConfig::regression("toy", 9),
    };
    c.embedder = EmbedderConfig {
        char_dim: 5,
        filter_widths: vec![2, 3, 4],
        filters_per_width: 2,
    };
    c.classifier = AnncConfig {
        conv1_filters: 6,
        conv2_filters: 4,
    };
    c.epochs = 1;
    c.freeze_epochs = 0;
    c
}

fn quads() -> Vec<Quadruple> {
    vec![
        Quadruple::new("kitab", "kutub", "qalb", "qulub"),
        Quadruple::new("ħobż", "ħbejjeż", "ħobż", "ħbejjeż"),
    ]
}

fn models() -> (ModelCheckpoint, ModelCheckpoint) {
    let clf = train_classifier(&quads(), &small(Task::Classification)).unwrap();
    let reg = train_regressor(&quads(), &small(Task::Regression), &clf).unwrap();
    (clf, reg)
}

#[test]
fn round_trip_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    for ckpt in [models().0, models().1] {
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.to_bytes().unwrap(), bytes);
        let again = dir.path().join("again.ckpt");
        save_checkpoint(&loaded, &again).unwrap();
        assert_eq!(std::fs::read(&again).unwrap(), bytes);
    }
}

#[test]
fn metadata_records_provenance() {
    let (clf, reg) = models();
    assert_eq!(clf.meta.task, Task::Classification);
    assert_eq!(clf.meta.seed, 9);
    assert!(clf.meta.charset.contains(&'ħ'));
    assert_eq!(reg.meta.init_from_seed, Some(9));
    assert_eq!(reg.meta.embedder, clf.meta.embedder);
    assert!(reg.meta.classifier.is_none());
    let bytes = clf.to_bytes().unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let meta: serde_json::Value = serde_json::from_slice(&bytes[12..12 + meta_len]).unwrap();
    assert_eq!(meta["task"], "classification");
    assert_eq!(meta["config"]["batch_size"], 256);
}

#[test]
fn corrupt_inputs_are_rejected() {
    let bytes = models().0.to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        ModelCheckpoint::from_bytes(&bad),
        Err(CheckpointError::BadMagic)
    ));
    let mut bad = bytes.clone();
    bad[4] = 7;
    assert!(matches!(
        ModelCheckpoint::from_bytes(&bad),
        Err(CheckpointError::Version { found: 7 })
    ));
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            ModelCheckpoint::from_bytes(&bytes[..cut]).is_err(),
            "truncated at {cut}"
        );
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(
        ModelCheckpoint::from_bytes(&extra),
        Err(CheckpointError::Corrupt(_))
    ));
    assert!(load_checkpoint("/nonexistent/model.ckpt").is_err());
}

#[test]
fn metadata_shape_disagreement_is_rejected() {
    let mut ckpt = models().0;
    ckpt.meta.embedder.char_dim += 1;
    let bytes = ckpt.to_bytes().unwrap();
    assert!(matches!(
        ModelCheckpoint::from_bytes(&bytes),
        Err(CheckpointError::Tensor { .. })
    ));
}
