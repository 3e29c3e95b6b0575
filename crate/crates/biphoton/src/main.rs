fn main() {
    println!("biphoton");
}
