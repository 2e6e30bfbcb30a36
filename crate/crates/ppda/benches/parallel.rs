// placeholder; filled in once the modules it benches exist
fn main() {}
