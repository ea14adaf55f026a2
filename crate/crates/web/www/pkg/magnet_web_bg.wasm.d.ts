/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demosession_free: (a: number, b: number) => void;
export const concreteHistogram: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const demosession_explain: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demosession_graph: (a: number) => [number, number, number, number];
export const demosession_new: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const demosession_train: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
