use cogan::adaptation::{
    attach_classifier, draw_batches, evaluate_accuracy, uda_train, uda_train_step, LabeledImages, UdaModel, UdaTask,
    UnlabeledImages,
};
use cogan::cogan::train::RunRngs;
use cogan::cogan::{build_cogan, cogan_train_step, ArchPreset, PresetName};
use cogan::datasets::{make_styled_corpus, make_synthetic_corpus, Style};
use cogan::nn::ParamId;
use cogan::optim::AdamConfig;
use cogan::rng::{stream, Stream};
use cogan::{Error, Tensor};

fn model(l: usize, seed: u64) -> cogan::Result<UdaModel> {
    let preset = ArchPreset::new(PresetName::DigitConv, 32).unwrap();
    let m = build_cogan(&preset, 4, l, AdamConfig::GAN, &mut stream(seed, Stream::Init)).unwrap();
    attach_classifier(m, 10, AdamConfig::GAN, &mut stream(seed, Stream::Aux))
}

fn task(n: usize, seed: u64) -> UdaTask {
    let s = make_styled_corpus(n, 28, Style::Centered, &mut stream(seed, Stream::Data)).unwrap();
    let t = make_styled_corpus(n, 28, Style::Compact, &mut stream(seed, Stream::Data)).unwrap();
    UdaTask { source: LabeledImages::from_corpus(&s).unwrap(), target: UnlabeledImages::from_corpus(&t), n_classes: 10 }
}

fn params_equal(a: &UdaModel, b: &UdaModel) -> bool {
    let (sa, sb) = (a.cogan.snapshot(), b.cogan.snapshot());
    sa.len() == sb.len() && sa.iter().all(|(k, v)| v.bit_eq(&sb[k]))
        && a.head.param_ids().iter().all(|id| a.cogan.store.get(id).unwrap().bit_eq(b.cogan.store.get(id).unwrap()))
}

#[test]
fn classifier_needs_tied_hidden_layer() {
    assert!(matches!(model(1, 0), Err(Error::Config(_))));
    assert!(model(2, 0).is_ok());
}

#[test]
fn head_outputs_are_distributions_stored_once() {
    let m = model(3, 1).unwrap();
    let x = make_synthetic_corpus(5, 28, &mut stream(1, Stream::Data)).unwrap();
    for which in [1, 2] {
        let p = m.classify(x.images(), which).unwrap();
        assert_eq!(p.shape(), &[5, 10]);
        for i in 0..5 {
            assert!((p.item(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    assert!(m.classify(x.images(), 3).is_err());
    let head: Vec<&ParamId> = m.cogan.store.ids().map(|(id, _)| id).filter(|id| id.as_str().starts_with("c.")).collect();
    assert_eq!(head.len(), 2);
    for id in head {
        let slot = m.cogan.store.slot_of(id).unwrap();
        assert_eq!(m.cogan.store.owners(slot).len(), 1);
    }
}

#[test]
fn equal_first_layers_make_both_classifiers_equal() {
    let mut m = model(3, 2).unwrap();
    let x = make_synthetic_corpus(4, 28, &mut stream(2, Stream::Data)).unwrap();
    let a = m.classify(x.images(), 1).unwrap();
    let b = m.classify(x.images(), 2).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() > 0.0);
    for name in ["weight", "bias"] {
        let v = m.cogan.store.get(&ParamId::new(format!("f1.b1.0.{name}"))).unwrap().clone();
        m.cogan.store.set(&ParamId::new(format!("f2.b1.0.{name}")), v).unwrap();
    }
    let a = m.classify(x.images(), 1).unwrap();
    let b = m.classify(x.images(), 2).unwrap();
    assert!(a.bit_eq(&b));
}

#[test]
fn zero_class_weight_is_a_plain_coupled_step() {
    let t = task(16, 3);
    let mut a = model(3, 3).unwrap();
    a.class_weight = 0.0;
    let mut b = a.clone();
    let mut rngs = RunRngs::new(3);
    for _ in 0..3 {
        let batch = draw_batches(&t, a.cogan.noise, 4, &mut rngs).unwrap();
        uda_train_step(&mut a, &batch).unwrap();
        cogan_train_step(&mut b.cogan, &batch.x1, &batch.x2, &batch.z).unwrap();
    }
    assert!(params_equal(&a, &b));
}

#[test]
fn zero_adversarial_rate_is_supervised_training_alone() {
    let t = task(16, 4);
    let mut a = model(3, 4).unwrap();
    a.cogan.opt_d.config.lr = 0.0;
    a.cogan.opt_g.config.lr = 0.0;
    let mut b = a.clone();
    let mut rngs = RunRngs::new(4);
    for _ in 0..3 {
        let batch = draw_batches(&t, a.cogan.noise, 4, &mut rngs).unwrap();
        uda_train_step(&mut a, &batch).unwrap();
        b.classification_step(&batch.labeled.0, &batch.labeled.1).unwrap();
    }
    assert!(params_equal(&a, &b));
}

#[test]
fn supervised_step_moves_f2_tied_layers_only() {
    let mut m = model(3, 5).unwrap();
    let before = m.cogan.snapshot();
    let x = make_synthetic_corpus(6, 28, &mut stream(5, Stream::Data)).unwrap();
    m.classification_step(x.images(), x.labels().unwrap()).unwrap();
    let after = m.cogan.snapshot();
    for block in 2..=3 {
        let id = format!("f2.b{block}.0.weight");
        assert!(!before[&id].bit_eq(&after[&id]), "{id} unchanged");
    }
    for id in ["f2.b1.0.weight", "g1.b1.0.weight", "g2.b1.0.weight"] {
        assert!(before[id].bit_eq(&after[id]), "{id} changed");
    }
    assert!(!before["f1.b1.0.weight"].bit_eq(&after["f1.b1.0.weight"]));
}

#[test]
fn target_labels_do_not_reach_training() {
    let s = make_styled_corpus(12, 28, Style::Centered, &mut stream(6, Stream::Data)).unwrap();
    let tgt = make_styled_corpus(12, 28, Style::Compact, &mut stream(6, Stream::Data)).unwrap();
    let with_labels = UdaTask {
        source: LabeledImages::from_corpus(&s).unwrap(),
        target: UnlabeledImages::from_corpus(&tgt),
        n_classes: 10,
    };
    let stripped = UdaTask {
        source: LabeledImages::from_corpus(&s).unwrap(),
        target: UnlabeledImages::from_corpus(&tgt.without_labels()),
        n_classes: 10,
    };
    let mut a = model(3, 6).unwrap();
    let mut b = a.clone();
    uda_train(&mut a, &with_labels, 2, 4, &mut RunRngs::new(6)).unwrap();
    uda_train(&mut b, &stripped, 2, 4, &mut RunRngs::new(6)).unwrap();
    assert!(params_equal(&a, &b));
    assert!(LabeledImages::from_corpus(&tgt.without_labels()).is_err());
}

#[test]
fn memorizes_a_tiny_corpus() {
    let c = make_synthetic_corpus(20, 28, &mut stream(7, Stream::Data)).unwrap();
    let mut m = model(3, 7).unwrap();
    m.opt_c.config.lr = 0.001;
    for _ in 0..150 {
        m.classification_step(c.images(), c.labels().unwrap()).unwrap();
    }
    let acc = evaluate_accuracy(&m, c.images(), c.labels().unwrap(), 1).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn uniform_head_scores_the_class_prior() {
    let mut m = model(3, 8).unwrap();
    for id in m.head.param_ids() {
        let shape = m.cogan.store.get(&id).unwrap().shape().to_vec();
        m.cogan.store.set(&id, Tensor::zeros(shape)).unwrap();
    }
    let c = make_synthetic_corpus(200, 28, &mut stream(8, Stream::Data)).unwrap();
    // every prediction ties and resolves to class 0
    let acc = evaluate_accuracy(&m, c.images(), c.labels().unwrap(), 2).unwrap();
    assert!((acc - 0.1).abs() <= 0.03, "accuracy {acc}");
    assert!(evaluate_accuracy(&m, c.images(), &[0; 3], 1).is_err());
}
