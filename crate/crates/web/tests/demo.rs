use reltex_web::{ColorEdit, Preview};

#[test]
fn preview_renders_rgba_frames() {
    let mut p = Preview::new(24).unwrap();
    let a = p.render(30.0, 10.0).unwrap();
    assert_eq!(a.len(), 24 * 24 * 4);
    assert!(a.chunks_exact(4).all(|px| px[3] == 255));
    p.set_material(0.1, 0.2, 0.9, 0.2, 1.0);
    assert_ne!(a, p.render(30.0, 10.0).unwrap());
    let lut = p.lut_rgba();
    assert_eq!(lut.len(), p.lut_size() * p.lut_size() * 4);
}

#[test]
fn edit_moves_albedo_toward_the_named_colour() {
    let mut e = ColorEdit::new("a blue object", 40, 16, 1).unwrap();
    let before = e.mean_albedo();
    while !e.done() {
        e.advance(15).unwrap();
    }
    assert_eq!(e.iteration(), 40);
    let after = e.mean_albedo();
    assert!(after[2] - after[0] > before[2] - before[0] + 0.05, "{before:?} -> {after:?}");
    assert_eq!(e.render(0.0, 0.0).unwrap().len(), 16 * 16 * 4);
}

#[test]
fn chunking_does_not_change_the_result() {
    let mut whole = ColorEdit::new("a green object", 30, 16, 4).unwrap();
    whole.advance(30).unwrap();
    let mut pieces = ColorEdit::new("a green object", 30, 16, 4).unwrap();
    for _ in 0..10 {
        pieces.advance(3).unwrap();
    }
    assert_eq!(whole.mean_albedo(), pieces.mean_albedo());
    assert_eq!(whole.render(45.0, 20.0).unwrap(), pieces.render(45.0, 20.0).unwrap());
}
