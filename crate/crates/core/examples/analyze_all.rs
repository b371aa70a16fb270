use qbmsym::{assembly::analyze, fixtures};

fn main() {
    for name in fixtures::names() {
        let spec = fixtures::load(name).unwrap();
        let r = analyze(&spec).unwrap();
        println!("{r}");
    }
}
