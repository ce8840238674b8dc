/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const check_menu: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const demo_new: (a: bigint) => number;
export const demo_train: (a: number, b: number) => [number, number, number, number];
export const demo_trained: (a: number) => number;
export const demo_trajectory: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
export const solve_oracle: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
