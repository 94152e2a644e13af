/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_cgoslice_free: (a: number, b: number) => void;
export const cgo_slice: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const cgoslice_iterations: (a: number) => number;
export const cgoslice_remainder: (a: number) => number;
export const cgoslice_size: (a: number) => number;
export const cgoslice_tau: (a: number) => number;
export const cgoslice_values: (a: number) => [number, number];
export const kelvin_circle: (a: number, b: number, c: number) => [number, number, number, number];
export const kelvin_point: (a: number, b: number, c: number) => [number, number, number, number];
export const schedule_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
