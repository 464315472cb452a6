pub mod evaluate;
pub mod gen_data;
pub mod impute;
pub mod train;
