pub mod ast;
pub mod grade;
pub mod parser;
pub mod typechecker;
pub mod interpreter;
pub mod metatheory;
